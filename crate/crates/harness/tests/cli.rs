//! End-to-end checks of the `bbm` binary.

use std::path::Path;
use std::process::{Command, Output};

fn bbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbm")).args(args).output().expect("binary runs")
}

fn number(out: &Output) -> f64 {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).trim().parse().expect("a number")
}

#[test]
fn csbp_eval_matches_the_closed_form() {
    // a = 0, b = 1: u_t(lambda) = lambda^{exp(-t)}.
    let v = number(&bbm(&["csbp", "eval", "--a", "0", "--b", "1", "--t", "1", "--lambda", "2"]));
    let expected = 2f64.powf((-1f64).exp());
    assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
}

#[test]
fn kernel_methods_agree_through_the_cli() {
    let base = ["kernel", "eval", "--s", "0.3", "--x", "0.25", "--y", "0.25"];
    let fourier = number(&bbm(&base));
    let images = number(&bbm(&[&base[..], &["--method", "images"]].concat()));
    assert!((fourier - images).abs() < 1e-10);
}

#[test]
fn predict_reports_a_time() {
    let out = bbm(&["predict", "--positions", "1,2,4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["time"].as_f64().unwrap() > 0.0);
}

fn small_e7(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("e7.json");
    std::fs::write(
        &p,
        r#"{"schema_version":1,"seed":7,"offspring":[0.0,0.0,1.0],"t":8.0,"dt":0.01,
            "xs":[-1.0,0.0,1.0],"n_runs":100,"shift_v":1.0,"max_particles":100000}"#,
    )
    .unwrap();
    p
}

#[test]
fn experiment_reports_are_byte_identical_across_reruns_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_e7(dir.path());
    let mut texts = Vec::new();
    for (sub, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out_dir = dir.path().join(sub);
        let out = bbm(&[
            "experiment",
            "E7",
            "--config",
            cfg.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("E7.timing.json").exists());
        texts.push(std::fs::read(out_dir.join("E7.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
}

#[test]
fn report_merge_combines_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_e7(dir.path());
    let out_dir = dir.path().join("r");
    bbm(&["experiment", "E7", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let report = out_dir.join("E7.json");
    let merged = dir.path().join("merged.json");
    let out = bbm(&["report", "merge", report.to_str().unwrap(), report.to_str().unwrap(), "--out", merged.to_str().unwrap()]);
    let single: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let all: serde_json::Value = serde_json::from_slice(&std::fs::read(&merged).unwrap()).unwrap();
    assert_eq!(all["reports"].as_array().unwrap().len(), 2);
    assert_eq!(all["pass"], single["pass"]);
    let expected = if single["pass"].as_bool().unwrap() { 0 } else { 1 };
    assert_eq!(out.status.code(), Some(expected));
}

#[test]
fn bad_input_is_an_error() {
    assert_ne!(bbm(&["no-such-command"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(bbm(&["experiment", "E7", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(bbm(&["report", "merge", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bbm(&["experiment", "E99", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}
