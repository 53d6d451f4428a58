use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use serde_json::Value;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mdim(args: &[&str]) -> std::process::Output {
    Proc::new(env!("CARGO_BIN_EXE_mdim")).args(args).output().unwrap()
}

fn json(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

fn run_ok(cmd: &str, config: &str) -> tempfile::TempDir {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join(config);
    let o = mdim(&[cmd, cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn one_point_estimate_slope_is_the_constant() {
    let out = run_ok("estimate", "one_point.toml");
    let s = json(out.path(), "summary.json");
    assert!((s["estimate"]["slope"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    let csv = std::fs::read_to_string(out.path().join("runs.csv")).unwrap();
    assert!(csv.starts_with(mdim_cli::CSV_SCHEMA));
    assert_eq!(csv.lines().count(), 2 + 9);
}

#[test]
fn full_shift_ratio_is_near_one() {
    let out = run_ok("estimate", "full_shift_x0.toml");
    let r = json(out.path(), "summary.json");
    let rows = r["estimate"]["rows"].as_array().unwrap();
    let last = rows.last().unwrap();
    let target = 257f64.ln() / (8.0 * 2f64.ln());
    assert!((last["ratio_upper"].as_f64().unwrap() - target).abs() < 0.02);
}

#[test]
fn variational_reports_the_sandwich() {
    let out = run_ok("variational", "one_point.toml");
    let r = json(out.path(), "report.json");
    assert_eq!(r["report"]["sandwich"]["singleton_equality"], Value::Bool(true));
    assert!((r["report"]["maxmin"]["value"].as_f64().unwrap() - 0.7).abs() < 1e-12);

    let out = run_ok("variational", "finite6_variational.toml");
    let r = json(out.path(), "report.json");
    assert_eq!(r["report"]["sandwich"]["value_below_m_hat"], Value::Bool(true));
    assert_eq!(r["report"]["gap_within_tolerance"], Value::Bool(true));
    let growth: Vec<f64> = r["report"]["dictionary_growth"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(growth.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn bowen_on_constant_potential() {
    let out = run_ok("bowen", "full_shift_bowen.toml");
    let r = json(out.path(), "report.json");
    // mdim proxy of f = 0 is 1/4 at eps = 1/16, so s0 = 1/4 for f = 1.
    assert!((r["report"]["root"]["s0"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert!(r["report"]["consistency"]["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn verify_swap_power_passes() {
    let out = run_ok("verify", "swap_power.toml");
    let r = json(out.path(), "report.json");
    assert_eq!(r["passed"], Value::Bool(true));
    for row in r["report"]["power"]["rows"].as_array().unwrap() {
        assert_eq!(row["log_q_iterate"], row["log_q_base"]);
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("one_point.toml"))
        .unwrap()
        .replace("n_range = [1, 2, 3]", "n_range = [3, 2]");
    std::fs::write(&bad, text).unwrap();
    let o = mdim(&["estimate", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn missing_config_exits_with_one() {
    let o = mdim(&["estimate", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn horizon_too_short_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("short.toml");
    let text = std::fs::read_to_string(configs().join("full_shift_x0.toml"))
        .unwrap()
        .replace("L = 12", "L = 3");
    std::fs::write(&bad, text).unwrap();
    let o = mdim(&["estimate", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
