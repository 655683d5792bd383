//! Every method of the synth-bin roster on two seeds, rendered as a table.

use lelp_kd::harness::{render_table, run_experiment, ExperimentConfig, ReportBundle};

fn main() -> lelp_kd::Result<()> {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![0, 1];
    let report = run_experiment(&config)?;
    print!("{}", render_table(&ReportBundle::new(&config, vec![report])));
    Ok(())
}
