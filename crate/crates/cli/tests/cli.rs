use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use starlab::report::{Status, VerificationReport};
use starlab_core::oracle::bessel_i;

fn preset_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"));
    std::fs::read_to_string(path).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn starlab(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starlab")).args(args).arg("--config").arg(config).output().unwrap()
}

fn small_flat(dir: &Path) -> PathBuf {
    let text = preset_text("flat3").replace("n = 16", "n = 8").replace("t_final = 0.1", "t_final = 0.09");
    write_config(dir, "flat8.toml", &text)
}

#[test]
fn odd_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "odd.toml", &preset_text("warped3").replace("n = 32", "n = 31"));
    let out = starlab(&["verify", "--suite", "all"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("even"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &preset_text("flat3").replace("preset = \"flat3\"\n\n[phi]", "preset = \"sphere\"\n\n[phi]"));
    assert_eq!(starlab(&["verify", "--suite", "identities"], &cfg).status.code(), Some(2));
}

#[test]
fn flat_identities_pass_and_refuse_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_flat(dir.path());
    let report_path = dir.path().join("report.json");
    let out = starlab(&["verify", "--suite", "identities", "--out", report_path.to_str().unwrap()], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(&report_path).unwrap();
    let report: VerificationReport = serde_json::from_slice(&first).unwrap();
    assert!(!report.rows.is_empty());
    assert!(report.rows.iter().all(|r| r.status == Status::Pass));
    assert!(report.rows.iter().any(|r| r.check_id == "flow.flat-stationarity"));

    let again = starlab(&["verify", "--suite", "identities", "--out", report_path.to_str().unwrap()], &cfg);
    assert_eq!(again.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = starlab(&["verify", "--suite", "identities", "--force", "--out", report_path.to_str().unwrap()], &cfg);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(std::fs::read(&report_path).unwrap(), first);
}

#[test]
fn csv_report_has_one_line_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_flat(dir.path());
    let path = dir.path().join("report.csv");
    let out = starlab(&["verify", "--suite", "bochner", "--out", path.to_str().unwrap()], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "check_id,scenario_id,lhs,rhs,abs_err,rel_err,tolerance,status");
    assert_eq!(lines.len(), 3);
}

#[test]
fn flow_series_has_header_and_one_row_per_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_flat(dir.path());
    let csv = dir.path().join("series.csv");
    let out = starlab(&["flow", "--out", csv.to_str().unwrap()], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("t,"));
    assert_eq!(lines.len(), 11);
    let last: Vec<f64> = lines[10].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 0.09).abs() < 1e-12);
    assert!((last[3] - 1.0).abs() < 1e-9);
}

#[test]
fn functional_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_flat(dir.path());
    let text = preset_text("flat3");
    let cfg16 = write_config(dir.path(), "flat16.toml", &text);
    let out = starlab(&["functional", "--which", "F"], &cfg16);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let exact = (2.0 * std::f64::consts::PI).powi(3) * (-bessel_i(0, 1.0) + bessel_i(1, 1.0));
    assert!((v["value"].as_f64().unwrap() - exact).abs() < 1e-9 * exact.abs());

    let out = starlab(&["functional", "--which", "omega"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["value"].as_f64().unwrap().is_finite());
}

#[test]
fn box_scenario_skips_grid_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", &preset_text("gaussian-box"));
    let out = starlab(&["verify", "--suite", "all"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: VerificationReport = serde_json::from_slice(&out.stdout).unwrap();
    let skipped = report.rows.iter().find(|r| r.check_id == "thm31.transport").unwrap();
    assert_eq!(skipped.status, Status::Diagnostic);
    assert!(report.rows.iter().any(|r| r.check_id == "prop11.soliton" && r.status == Status::Pass));
}

#[test]
fn functional_on_box_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", &preset_text("gaussian-box"));
    assert_eq!(starlab(&["functional", "--which", "F"], &cfg).status.code(), Some(3));
}
