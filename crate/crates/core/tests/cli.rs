use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuropde")).current_dir(dir).args(args).output().unwrap()
}

#[test]
fn success_writes_report() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["kolmogorov", "--steps", "20", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("o/kolmogorov.json")).unwrap()).unwrap();
    assert!(report["relative_l2_error"].as_f64().unwrap().is_finite());
}

#[test]
fn solve_writes_table() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["solve", "--method", "fdm", "--n", "32", "--steps", "20", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(d.path().join("o/solution.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("index;input;solution"));
    assert_eq!(text.lines().count(), 33);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["solve", "--method", "euler"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["bench", "--config", "missing.toml"]).status.code(), Some(2));
    std::fs::write(d.path().join("bad.toml"), "[data]\nn = 48\n").unwrap();
    assert_eq!(run(d.path(), &["gen-data", "--config", "bad.toml"]).status.code(), Some(2));
    // no datasets yet
    assert_eq!(run(d.path(), &["train", "--out", "empty"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[kolmogorov]\nlr = 1e300\nlr_final = 1e300\nsteps = 10\n").unwrap();
    let out = run(d.path(), &["kolmogorov", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical"));
}
