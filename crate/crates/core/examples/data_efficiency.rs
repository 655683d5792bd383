//! Accuracy as the distillation set shrinks. The teacher always sees the full
//! training set; students see a stratified subsample.

use lelp_kd::harness::{
    data_efficiency_sweep, render_table, ExperimentConfig, MethodConfig, MethodKind, ReportBundle,
};

fn main() -> lelp_kd::Result<()> {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![0, 1];
    config.methods = [MethodKind::Standard, MethodKind::Vanilla, MethodKind::Lelp]
        .into_iter()
        .map(MethodConfig::new)
        .collect();
    let reports = data_efficiency_sweep(&config, &[0.05, 0.25, 1.0])?;
    print!("{}", render_table(&ReportBundle::new(&config, reports)));
    Ok(())
}
