use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_needle-grasp"));
    c.env_remove("NEEDLE_GRASP_OUT_DIR").env_remove("RUST_LOG");
    c
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_paper_passes() {
    let o = bin().arg("verify-paper").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("row")).count(), 15);
    assert!(text.contains("mean 3.211"));
}

#[test]
fn run_writes_trace_under_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("NEEDLE_GRASP_OUT_DIR", dir.path())
        .args(["--quiet", "run", "--config"])
        .arg(config("zero_noise.json"))
        .args(["--seed", "4", "--trace", "traces/t.csv", "--detections", "d.csv"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("outcome=success"));
    let trace = std::fs::read_to_string(dir.path().join("traces/t.csv")).unwrap();
    assert!(trace.starts_with("# needle-grasp trace v1\ntrial_id,t,phase,"));
    assert!(trace.trim_end().ends_with(",success"));
    let det = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(det.lines().count() > 10);
    assert!(o.stderr.is_empty());
}

#[test]
fn batch_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = bin()
            .args(["-q", "batch", "--config"])
            .arg(config("calibrated.json"))
            .args(["-n", "4", "--out"])
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["n_trials"], 4);
}

#[test]
fn calibrate_prints_report() {
    let o = bin()
        .args(["-q", "calibrate", "--config"])
        .arg(config("calibrated.json"))
        .args(["--seed", "2"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 2);
    assert!(v["scan_d_mean_avg_mm"].as_f64().unwrap() > 0.5);
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"noise": {"pixel_sigma": 0.1, "colour": 3}}"#).unwrap();
    let o = bin()
        .args(["run", "--seed", "1", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = bin()
        .args(["run", "--seed", "1", "--config", "/nonexistent.json"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}
