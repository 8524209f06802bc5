use std::fs;
use std::path::Path;
use std::process::Command;

fn martrep() -> Command {
    Command::new(env!("CARGO_BIN_EXE_martrep"))
}

fn write_config(dir: &Path, replications: usize) -> std::path::PathBuf {
    let config = serde_json::json!({
        "scheme": {
            "kind": "trinomial_bm",
            "horizon": 1.0,
            "levels": [4, 8],
            "sigma": 1.0,
            "payoff": { "name": "square" }
        },
        "replications": replications,
        "seed": 11,
        "reference_cells": 256
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 3);
    let out = dir.path().join("out");
    let status = martrep().arg("run").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("report.json").exists());
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("level,metric,epsilon,value,exact_flag,replications,seed\n"));
    let status = martrep().arg("verify").arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 3);
    let out = dir.path().join("out");
    let status = martrep()
        .args(["run", "--seed", "99", "--replications", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 99);
    assert_eq!(report["levels"][0]["monte_carlo"]["replications"], 2);
}

#[test]
fn tampered_report_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2);
    let out = dir.path().join("out");
    martrep().arg("run").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    let path = out.join("report.json");
    let mut report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    report["levels"][1]["exact"]["n_bracket"] = serde_json::json!(0.5);
    fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    let status = martrep().arg("verify").arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn usage_and_io_errors_exit_with_one() {
    assert_eq!(martrep().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(
        martrep().args(["run", "--config", "/nonexistent/config.json", "--out", "/tmp/x"]).status().unwrap().code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"scheme": 3}"#).unwrap();
    let status = martrep()
        .arg("run")
        .arg("--config")
        .arg(dir.path().join("bad.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert_eq!(martrep().arg("verify").arg("--out").arg(dir.path().join("missing")).status().unwrap().code(), Some(1));
}
