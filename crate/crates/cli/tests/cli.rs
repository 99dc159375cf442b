use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn thinobs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinobs"))
        .args(args)
        .env("THINOBS_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn spectrum_summary_has_eigenvalue_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "s": [0.5], "grid": 2000, "modes": 4}"#);
    let out = dir.path().join("out");
    let res = thinobs(&["spectrum", "--config", &cfg], &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("spectrum_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["suite"], "spectrum");
    let rows = summary["data"]["eigenvalues"]["s0.5"].as_array().unwrap();
    for (row, exact) in rows.iter().zip([0.25, 2.25, 6.25, 12.25]) {
        let got = row["oracle"].as_f64().unwrap();
        assert!((got - exact).abs() / exact < 1e-3);
    }
    for c in summary["checks"].as_array().unwrap() {
        assert!(c["name"].is_string() && c["value"].is_number() && c["threshold"].is_number());
        assert_eq!(c["pass"], true);
    }
    let csv = fs::read_to_string(out.join("spectrum_eigenvalues_s0.5.csv")).unwrap();
    assert!(csv.starts_with("# k,oracle,exact,rel_error\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn missing_order_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "grid": 2000}"#);
    let res = thinobs(&["spectrum", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("`s`"));
    let bad = write_config(dir.path(), r#"{"schema_version": 1, "s": [0.5], "colour": "red"}"#);
    assert_eq!(thinobs(&["spectrum", "--config", &bad], dir.path()).status.code(), Some(2));
    assert_eq!(thinobs(&["nonsense"], dir.path()).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "s": [0.3, 0.7], "samples": 200}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(thinobs(&["barrier", "--config", &cfg, "--seed", "3"], &a).status.code(), Some(0));
    assert_eq!(
        thinobs(&["barrier", "--config", &cfg, "--seed", "3", "--threads", "2"], &b).status.code(),
        Some(0)
    );
    for name in ["barrier_constants.csv", "barrier_summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn out_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("flag");
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "s": [0.5], "samples": 50, "triples": 1000}"#);
    let res = thinobs(&["grushin", "--config", &cfg, "--out", flag.to_str().unwrap()], &dir.path().join("env"));
    assert_eq!(res.status.code(), Some(0));
    assert!(flag.join("grushin_summary.json").exists());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn verify_all_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = thinobs(&["verify-all"], &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("verify-all_summary.json")).unwrap()).unwrap();
    assert!(summary["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let conv = fs::read_to_string(out.join("solve_convergence_s0.5.csv")).unwrap();
    assert!(conv.starts_with("# h,sup_error,order_estimate\n"));
    assert!(out.join("hodograph_residual_s0.5.csv").exists());
    assert!(out.join("solve_free_boundary_s0.3.csv").exists());
}
