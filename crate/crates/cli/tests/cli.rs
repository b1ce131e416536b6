use std::path::{Path, PathBuf};
use std::process::Command;

use twistlab_cli::{run_in, RunConfig};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn twistlab(out: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_twistlab"));
    c.env("TWISTLAB_OUT", out);
    c
}

#[test]
fn run_writes_task_files_summary_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let status = twistlab(dir.path())
        .args(["run", config("energy_ode.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["energy.csv", "summary.json", "record.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["task"], "energy-ode");
    assert!(summary["reproduces"].is_string());
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("energy_ode.toml")).unwrap();
    std::fs::write(&path, text.replace("[params]", "[params]\nbogus = 1")).unwrap();
    let out = twistlab(&dir.path().join("out"))
        .args(["run", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn check_runs_the_inequality_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = twistlab(dir.path()).args(["check", "--seeds", "5"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("ineq_angular.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = twistlab(dir.path())
        .args(["sweep", config("energy_ode.toml").to_str().unwrap(), "--axis", "c_h", "--values", "0.2,0.3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("c_h,status"));
    assert!(dir.path().join("c_h=0.2").join("record.json").exists());
}

#[test]
fn reruns_reproduce_csv_bytes_and_config_hash() {
    let cfg = RunConfig::load(&config("oracle_1d.toml")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_in(&cfg, a.path()).unwrap();
    let rb = run_in(&cfg, b.path()).unwrap();
    assert_eq!(ra.config_hash, rb.config_hash);
    assert_eq!(ra.summary, rb.summary);
    let name = "oracle_1d.json";
    assert_eq!(
        std::fs::read(a.path().join(name)).unwrap(),
        std::fs::read(b.path().join(name)).unwrap()
    );
    assert!(ra.passed());
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}
