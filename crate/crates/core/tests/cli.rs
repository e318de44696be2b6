use std::path::Path;
use std::process::Command;

fn negcurve(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_negcurve")).args(args).env("LOGLEVEL", "error").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn constant_curvature_is_rejected_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("hyp.json");
    std::fs::write(&cfg, r#"{"curvature":{"family":"constant","params":{"k":1.0}},"gamma":0.5,"R":2}"#).unwrap();
    let out = tmp.path().join("out");
    let (code, _) = negcurve(&["immerse", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let r = report(&out);
    assert_eq!(r["abort"]["message"], "infinite total curvature");
    assert!(r["metric"].is_null() && r["outer"].is_null());
}

#[test]
fn invalid_cfl_fails_validation_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let (code, msg) = negcurve(&["solve", "--out", out.to_str().unwrap(), "--override", "scheme.cfl=2"]);
    assert_eq!(code, 4);
    assert!(msg.contains("cfl"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn missing_config_is_an_io_error() {
    let (code, _) = negcurve(&["check", "--config", "/nonexistent/run.json"]);
    assert_eq!(code, 4);
}

#[test]
fn check_reports_log_power_total() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let (code, _) = negcurve(&[
        "check",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "curvature.family=log_power",
        "--override",
        "curvature.params={\"gamma0\":1}",
    ]);
    assert_eq!(code, 0);
    let r = report(&out);
    let total = r["admissibility"]["total_decay_curvature"].as_f64().unwrap();
    let expected = 1.0 / (2.0 * 2f64.ln().powi(2));
    assert!((total - expected).abs() / expected < 1e-6);
    assert_eq!(r["regime"], "increasing");
    assert!(out.join("admissibility.json").exists() && !out.join("metric.json").exists());
}

#[test]
fn oracle_decreasing_regime_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let (code, _) = negcurve(&[
        "oracle",
        "--out",
        out.to_str().unwrap(),
        "--regime",
        "decreasing",
        "--override",
        "curvature.family=pure_power",
        "--override",
        "curvature.params={\"eta\":0.1}",
    ]);
    assert_eq!(code, 0);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert!(r["closed_vs_ode"].as_f64().unwrap() <= 1e-8);
    assert_eq!(r["regime"], "decreasing");
}

#[test]
fn chart_stage_is_reproducible_after_deletion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(negcurve(&["chart", "--out", o]).0, 0);
    let before = std::fs::read(out.join("chart.json")).unwrap();
    std::fs::remove_file(out.join("chart.json")).unwrap();
    assert_eq!(negcurve(&["chart", "--out", o]).0, 0);
    assert_eq!(before, std::fs::read(out.join("chart.json")).unwrap());
}

#[test]
fn immerse_then_verify_is_green() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(negcurve(&["immerse", "--out", o]).0, 0);
    assert!(out.join("mesh.obj").exists() && out.join("energy_trace.csv").exists());
    let (code, text) = negcurve(&["verify", "--out", o]);
    assert_eq!(code, 0, "{text}");
    assert!(!text.contains("FAIL"));
    // tampering is caught
    let csv = std::fs::read_to_string(out.join("energy_trace.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[7] = "-1e-3".into();
    lines[3] = cells.join(",");
    std::fs::write(out.join("energy_trace.csv"), lines.join("\n") + "\n").unwrap();
    assert_eq!(negcurve(&["verify", "--out", o]).0, 3);
}
