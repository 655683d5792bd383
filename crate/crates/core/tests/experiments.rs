//! Harness behavior on the synth-bin benchmark and its config file.

use std::path::Path;

use lelp_kd::harness::{
    data_efficiency_sweep, run_experiment, ExperimentConfig, MethodConfig, MethodKind, RunReport,
};

fn config_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synth-bin.toml")
}

fn accuracies(report: &RunReport, name: &str) -> Vec<Option<f64>> {
    report
        .method(name)
        .unwrap()
        .runs
        .iter()
        .map(|r| r.accuracy)
        .collect()
}

#[test]
fn shipped_config_is_the_builtin_benchmark() {
    let loaded = ExperimentConfig::load(config_path()).unwrap();
    assert_eq!(loaded, ExperimentConfig::synth_bin());
}

#[test]
fn single_subclass_lelp_matches_vanilla_per_seed() {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![0, 1, 2];
    let mut s1 = MethodConfig::new(MethodKind::Lelp).named("lelp-s1");
    s1.subclasses = 1;
    config.methods = vec![MethodConfig::new(MethodKind::Vanilla), s1];
    let report = run_experiment(&config).unwrap();
    assert_eq!(accuracies(&report, "vanilla"), accuracies(&report, "lelp-s1"));
}

#[test]
fn changing_one_method_leaves_the_others_alone() {
    let mut config = ExperimentConfig::synth_bin();
    config.seeds = vec![3];
    config.methods = vec![
        MethodConfig::new(MethodKind::Standard),
        MethodConfig::new(MethodKind::Lelp),
    ];
    let a = run_experiment(&config).unwrap();
    config.methods[1].beta = 0.25;
    config.methods.push(MethodConfig::new(MethodKind::Vanilla));
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.teacher_accuracy, b.teacher_accuracy);
    let (a, b) = (a.without_timing(), b.without_timing());
    assert_eq!(a.method("standard"), b.method("standard"));
    assert_ne!(accuracies(&a, "lelp"), accuracies(&b, "lelp"));
}

#[test]
fn sweep_gives_one_row_per_method_per_fraction_and_more_data_does_not_hurt() {
    let mut config = ExperimentConfig::synth_bin();
    config.methods = vec![
        MethodConfig::new(MethodKind::Vanilla),
        MethodConfig::new(MethodKind::Lelp),
    ];
    let reports = data_efficiency_sweep(&config, &[0.25, 1.0]).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.methods.len(), 2);
        assert!(r.methods.iter().all(|m| m.runs.len() == config.seeds.len()));
    }
    let (quarter, full) = (
        reports[0].method("lelp").unwrap(),
        reports[1].method("lelp").unwrap(),
    );
    let slack = quarter.std.unwrap().max(full.std.unwrap());
    assert!(full.mean.unwrap() >= quarter.mean.unwrap() - slack);
    assert!(reports[1].distill_size > reports[0].distill_size);
}
