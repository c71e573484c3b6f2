//! Verification rows, reports and their JSON/CSV emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starlab_core::flow::{CoupledTrajectory, UConvention};
use thiserror::Error;

/// Below this `|rhs|` a row is judged on its absolute error.
pub const NEAR_ZERO: f64 = 1e-10;

pub const BUILD_ID: &str = concat!("starlab-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("refusing to overwrite {0} (pass --force)")]
    RefusedOverwrite(PathBuf),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot serialize output: {0}")]
    Serialize(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub check_id: String,
    pub scenario_id: String,
    #[serde(deserialize_with = "nan_if_null")]
    pub lhs: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub rhs: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub abs_err: f64,
    /// `abs_err/|rhs|`, or `abs_err` when `|rhs| ≤ NEAR_ZERO`.
    #[serde(deserialize_with = "nan_if_null")]
    pub rel_err: f64,
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Non-finite values are written as `null`; read them back as NaN.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn errors(lhs: f64, rhs: f64) -> (f64, f64) {
    let abs = (lhs - rhs).abs();
    let rel = if rhs.abs() > NEAR_ZERO { abs / rhs.abs() } else { abs };
    (abs, rel)
}

impl Row {
    /// Asserting row: passes iff `rel_err ≤ tolerance`.
    pub fn check(check_id: &str, scenario_id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Row {
        let (abs_err, rel_err) = errors(lhs, rhs);
        let status = if rel_err <= tolerance { Status::Pass } else { Status::Fail };
        Row {
            check_id: check_id.into(),
            scenario_id: scenario_id.into(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tolerance,
            status,
            note: String::new(),
        }
    }

    pub fn diagnostic(check_id: &str, scenario_id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Row {
        Row { status: Status::Diagnostic, ..Row::check(check_id, scenario_id, lhs, rhs, tolerance) }
    }

    /// A check that could not be evaluated.
    pub fn failed(check_id: &str, scenario_id: &str, tolerance: f64, message: impl Into<String>) -> Row {
        Row {
            check_id: check_id.into(),
            scenario_id: scenario_id.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            abs_err: f64::NAN,
            rel_err: f64::NAN,
            tolerance,
            status: Status::Fail,
            note: message.into(),
        }
    }

    /// A check that does not apply to the configured domain.
    pub fn skipped(check_id: &str, scenario_id: &str, tolerance: f64, reason: impl Into<String>) -> Row {
        Row { status: Status::Diagnostic, ..Row::failed(check_id, scenario_id, tolerance, reason) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Row {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub grid_n: usize,
    pub dt: f64,
    pub h0: Option<f64>,
    pub levels: usize,
    pub seed: u64,
    pub build_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub environment: Environment,
    pub rows: Vec<Row>,
}

impl VerificationReport {
    /// Every non-diagnostic row passes.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
    }

    pub fn to_json(&self) -> Result<String, OutputError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| OutputError::Serialize(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check_id,scenario_id,lhs,rhs,abs_err,rel_err,tolerance,status\n");
        for r in &self.rows {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Diagnostic => "diagnostic",
            };
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.check_id, r.scenario_id, r.lhs, r.rhs, r.abs_err, r.rel_err, r.tolerance, status
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// `.csv` selects CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

pub enum Output<'a> {
    Report(&'a VerificationReport),
    Trajectory(&'a CoupledTrajectory, UConvention),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> OutputError + '_ {
    move |e| OutputError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn emit_outputs(output: Output<'_>, format: Format, path: &Path, force: bool) -> Result<(), OutputError> {
    if path.exists() && !force {
        return Err(OutputError::RefusedOverwrite(path.to_path_buf()));
    }
    let bytes = match (output, format) {
        (Output::Report(r), Format::Json) => r.to_json()?.into_bytes(),
        (Output::Report(r), Format::Csv) => r.to_csv().into_bytes(),
        (Output::Trajectory(traj, conv), _) => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf, conv).map_err(|e| OutputError::Serialize(e.to_string()))?;
            buf
        }
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(&bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
