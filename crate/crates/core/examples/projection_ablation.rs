//! Where the subclass directions come from: fitted (null-space, PCA,
//! rotation), raw PCA, random orthonormal, and the full embedding basis.

use lelp_kd::baselines::DirectionMode;
use lelp_kd::harness::{render_table, Experiment, ExperimentConfig, MethodConfig, MethodKind, ReportBundle};

fn main() -> lelp_kd::Result<()> {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![0, 1, 2];
    let width = *config.teacher.hidden.last().unwrap();
    config.methods = [
        (DirectionMode::Lelp, 10),
        (DirectionMode::RawPca, 10),
        (DirectionMode::Random, 10),
        (DirectionMode::Identity, width),
    ]
    .into_iter()
    .map(|(mode, s)| MethodConfig {
        mode,
        subclasses: s,
        ..MethodConfig::new(MethodKind::Lelp).named(mode.as_str())
    })
    .collect();
    let report = Experiment::prepare(&config)?.run()?;
    print!("{}", render_table(&ReportBundle::new(&config, vec![report])));
    Ok(())
}
