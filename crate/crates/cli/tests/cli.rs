use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn quick_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml")
}

fn lelp(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_lelp"))
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_writes_reports_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = lelp(&["run", quick_config().to_str().unwrap(), "--out", d]);
    assert!(stdout(&out).contains("lelp"));
    for f in [
        "report.json",
        "report.txt",
        "report.csv",
        "curves.csv",
        "config.toml",
        "dataset.toml",
        "teacher.bin",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["reports"][0]["kind"], "run");
    assert_eq!(json["reports"][0]["methods"].as_array().unwrap().len(), 4);
}

#[test]
fn report_rerenders_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    lelp(&[
        "--seed",
        "5",
        "sweep-data",
        quick_config().to_str().unwrap(),
        "--fractions",
        "0.5,1.0",
        "--out",
        d,
    ]);
    let table = stdout(&lelp(&["report", d]));
    assert_eq!(table.matches("fraction=").count(), 2);
    let csv = stdout(&lelp(&["report", d, "--format", "csv"]));
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("kind,fraction"));
    // 2 fractions x 4 methods x 2 seeds
    assert_eq!(csv.lines().count(), 1 + 16);
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&lelp(&["report", d, "--format", "json"]))).unwrap();
    assert_eq!(json["config"]["seed"], 5);
}

#[test]
fn semi_forces_the_semi_supervised_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = lelp(&[
        "semi",
        quick_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(stdout(&out).starts_with("semi labeled="));
}

#[test]
fn bad_config_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeds = []\n[[methods]]\nkind = \"standard\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lelp"))
        .args(["run", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
