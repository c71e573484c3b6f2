use std::path::PathBuf;

use starlab::report::Status;
use starlab::suites::{run_suite, Suite};
use starlab::ScenarioConfig;

fn preset(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"))).unwrap()
}

#[test]
fn every_preset_validates() {
    for name in ["flat3", "warped3", "rot-phi", "gaussian-box"] {
        preset(name).validate().unwrap();
    }
}

#[test]
fn warped_thm21_rows() {
    let mut cfg = preset("warped3");
    cfg.domain.n = 16;
    cfg.flow.t_final = 0.04;
    let report = run_suite(&cfg, Suite::Thm21).unwrap();
    let status = |id: &str| report.rows.iter().find(|r| r.check_id == id).map(|r| r.status);
    assert_eq!(status("thm21.chain-vs-fd"), Some(Status::Pass));
    assert_eq!(status("thm21.paper-vs-fd"), Some(Status::Diagnostic));
    assert!(report.passed());
}

#[test]
fn formula_mode_selects_rows() {
    let mut cfg = preset("rot-phi");
    cfg.formula_mode = starlab::config::FormulaSelect::Chain;
    let report = run_suite(&cfg, Suite::Thm21).unwrap();
    assert!(report.rows.iter().any(|r| r.check_id == "thm21.chain-vs-fd"));
    assert!(!report.rows.iter().any(|r| r.check_id == "thm21.paper-vs-fd"));
}

#[test]
fn runtime_errors_become_failed_rows() {
    let mut cfg = preset("rot-phi");
    cfg.fd.h0 = Some(1.0);
    let report = run_suite(&cfg, Suite::Thm21).unwrap();
    let row = report.rows.iter().find(|r| r.check_id == "thm21.chain-vs-fd").unwrap();
    assert_eq!(row.status, Status::Fail);
    assert!(row.lhs.is_nan() && !row.note.is_empty());
    assert!(!report.passed());
}

#[test]
fn reports_are_reproducible() {
    let cfg = preset("rot-phi");
    let a = run_suite(&cfg, Suite::Prop12).unwrap().to_json().unwrap();
    let b = run_suite(&cfg, Suite::Prop12).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run_suite(&other, Suite::Prop12).unwrap().to_json().unwrap(), a);
}
