//! A teacher trained on 10% of the labels pseudo-labels the remaining rows,
//! then every student distills from it on the full set.

use lelp_kd::harness::{
    render_table, semi_supervised_run, ExperimentConfig, MethodConfig, MethodKind, ReportBundle,
};

fn main() -> lelp_kd::Result<()> {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![0, 1];
    config.semi.enabled = true;
    config.semi.labeled_fraction = 0.1;
    config.methods = [
        MethodKind::Standard,
        MethodKind::Vanilla,
        MethodKind::Lelp,
        MethodKind::Oracle,
    ]
    .into_iter()
    .map(MethodConfig::new)
    .collect();
    let report = semi_supervised_run(&config)?;
    print!("{}", render_table(&ReportBundle::new(&config, vec![report])));
    Ok(())
}
