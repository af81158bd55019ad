use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qsd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .current_dir(cwd)
        .env_remove("QSD_OUT_DIR")
        .output()
        .expect("spawn qsd")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check_status(report: &Value, name: &str) -> String {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))["status"]
        .as_str()
        .unwrap()
        .to_owned()
}

#[test]
fn smallest_run_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n_traj": 1, "t_max": 0.001}"#);
    let out = qsd(&["run", "--config", &cfg, "--preset", "dephasing-qubit", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/trajectories.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    for f in ["ledger.csv", "spectrum.csv", "exact.csv", "report.json", "config.json"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    let report = json(&dir.path().join("o/report.json"));
    assert_eq!(check_status(&report, "martingale"), "insufficient trajectories");
    assert_eq!(report["unraveling"]["status"], "skipped");
}

#[test]
fn zero_step_is_a_validation_failure_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"dt": 0}"#);
    let out = qsd(&["run", "--config", &cfg, "--preset", "dephasing-qubit", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`dt`"));
}

#[test]
fn unknown_preset_lists_the_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["run", "--preset", "no-such-model"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["dephasing-qubit", "amplitude-damping-qubit", "two-channel-qutrit", "purification-bell"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"preset": "dephasing-qubit", "dtt": 0.1}"#);
    let out = qsd(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["run", "--config", "absent.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn positivity_loss_exits_with_numerical_abort() {
    // The mixed equation from the excited state under decay leaves the
    // positive cone in the first steps.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"mode": "mixed", "n_traj": 3, "t_max": 0.5}"#);
    let out = qsd(&["run", "--config", &cfg, "--preset", "amplitude-damping-qubit", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("o/report.json"));
    assert!(!report["aborted"].as_array().unwrap().is_empty());
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n_traj": 2, "t_max": 0.01}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(["run", "--config", &cfg, "--preset", "purification-bell"])
        .current_dir(dir.path())
        .env("QSD_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from-env/report.json").exists());
}

#[test]
fn report_round_trips_and_flags_deleted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n_traj": 120, "t_max": 0.2, "record_stride": 20}"#);
    let out = qsd(&["run", "--config", &cfg, "--preset", "dephasing-qubit", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out = qsd(&["report", "--in", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let live = json(&dir.path().join("o/report.json"));
    let rebuilt = json(&dir.path().join("o/summary.json"));
    for section in ["doob_meyer", "submartingale", "convergence", "unraveling"] {
        assert_eq!(live[section], rebuilt[section], "{section}");
    }
    assert_eq!(check_status(&rebuilt, "grid_integrity"), "pass");
    assert_eq!(check_status(&rebuilt, "states_valid"), "pass");
    assert!(String::from_utf8_lossy(&out.stdout).contains("grid_integrity"));

    let path = dir.path().join("o/ledger.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|&(i, _)| i != 5).map(|(_, l)| l).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let out = qsd(&["report", "--in", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let tampered = json(&dir.path().join("o/summary.json"));
    assert_eq!(check_status(&tampered, "grid_integrity"), "fail");
}

#[test]
fn report_on_missing_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["report", "--in", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n_traj": 8, "t_max": 0.1, "record_stride": 10}"#);
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let o = qsd(
            &["run", "--config", &cfg, "--preset", "two-channel-qutrit", "--out", out, "--workers", workers, "--dump-increments"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectories.csv", "ledger.csv", "spectrum.csv", "exact.csv", "report.json", "config.json", "increments/traj_7.bin"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}
