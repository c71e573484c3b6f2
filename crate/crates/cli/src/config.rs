//! TOML scenario configuration and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starlab_core::fields::{Domain, Grid, MetricField, PhiField, VectorField};
use starlab_core::flow::UConvention;
use starlab_core::presets::{self, PresetName, PresetParams, TrigVector};
use starlab_core::TrigPoly;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Torus,
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Grid points per axis.
    pub n: usize,
}

fn default_dim() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub preset: PresetName,
    #[serde(default)]
    pub params: PresetParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiPreset {
    Zero,
    Identity,
    Flat3,
    Warped3,
    RotPhi,
    GaussianBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    pub preset: PhiPreset,
    #[serde(default)]
    pub params: PresetParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorPreset {
    /// The soliton field carried by the metric preset.
    #[default]
    Scenario,
    Zero,
    /// `−λx`
    Radial,
    Trig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    #[serde(default)]
    pub preset: VectorPreset,
    #[serde(default)]
    pub components: TrigVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub dt: f64,
    /// Final time `T`.
    pub t_final: f64,
    pub tau0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    #[serde(default)]
    pub h0: Option<f64>,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    3
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { h0: None, levels: default_levels() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulaSelect {
    Paper,
    Chain,
    #[default]
    Both,
}

impl FormulaSelect {
    pub fn chain(self) -> bool {
        self != FormulaSelect::Paper
    }

    pub fn paper(self) -> bool {
        self != FormulaSelect::Chain
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identities_analytic: f64,
    pub identities_grid: f64,
    pub stationarity: f64,
    pub f_closed_form: f64,
    pub thm21: f64,
    pub prop12: f64,
    pub prop11_steady: f64,
    pub prop11_general: f64,
    pub prop11_scaling: f64,
    pub bochner: f64,
    pub conservation: f64,
    pub thm31: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identities_analytic: 1e-9,
            identities_grid: 1e-7,
            stationarity: 1e-12,
            f_closed_form: 1e-8,
            thm21: 1e-4,
            prop12: 1e-6,
            prop11_steady: 1e-12,
            prop11_general: 1e-5,
            prop11_scaling: 1e-8,
            bochner: 1e-7,
            conservation: 1e-6,
            thm31: 1e-4,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 12] {
        [
            ("identities_analytic", self.identities_analytic),
            ("identities_grid", self.identities_grid),
            ("stationarity", self.stationarity),
            ("f_closed_form", self.f_closed_form),
            ("thm21", self.thm21),
            ("prop12", self.prop12),
            ("prop11_steady", self.prop11_steady),
            ("prop11_general", self.prop11_general),
            ("prop11_scaling", self.prop11_scaling),
            ("bochner", self.bochner),
            ("conservation", self.conservation),
            ("thm31", self.thm31),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub series: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub domain: DomainSpec,
    pub metric: MetricSpec,
    pub phi: PhiSpec,
    /// Test function `f(x, t)`; also the final data of the backward equation.
    #[serde(default)]
    pub f: TrigPoly,
    #[serde(default)]
    pub v: VectorSpec,
    /// Overrides the preset's soliton constant.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub flow: FlowSpec,
    #[serde(default)]
    pub fd: FdSpec,
    #[serde(default)]
    pub u_convention: UConvention,
    #[serde(default)]
    pub formula_mode: FormulaSelect,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Fields assembled from a validated configuration.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub id: String,
    pub metric_preset: PresetName,
    pub domain: Domain,
    pub metric: MetricField,
    pub phi: PhiField,
    pub v: VectorField,
    pub lambda: f64,
    pub f: TrigPoly,
}

impl ResolvedScenario {
    pub fn grid(&self, n: usize) -> Option<Grid> {
        Grid::new(&self.domain, n).ok()
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.domain;
        if d.dim != 3 {
            return Err(invalid(format!("presets are three-dimensional, got dim = {}", d.dim)));
        }
        if d.n < 4 || d.n % 2 != 0 {
            return Err(invalid(format!("grid N must be even and at least 4, got {}", d.n)));
        }
        let box_preset = self.metric.preset == PresetName::GaussianBox;
        if box_preset != (d.kind == DomainKind::Box) {
            return Err(invalid(format!("metric preset {} does not live on a {:?} domain", self.metric.preset, d.kind)));
        }
        let fl = &self.flow;
        for (name, v) in [("dt", fl.dt), ("t_final", fl.t_final), ("tau0", fl.tau0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("flow.{name} must be positive, got {v}")));
            }
        }
        if fl.t_final >= fl.tau0 {
            return Err(invalid(format!("T = {} must be smaller than τ0 = {}", fl.t_final, fl.tau0)));
        }
        if fl.dt > fl.t_final {
            return Err(invalid(format!("dt = {} exceeds T = {}", fl.dt, fl.t_final)));
        }
        if let Some(h) = self.fd.h0 {
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(format!("fd.h0 must be positive, got {h}")));
            }
        }
        if !(1..=6).contains(&self.fd.levels) {
            return Err(invalid(format!("fd.levels must lie in 1..=6, got {}", self.fd.levels)));
        }
        for (name, tol) in self.tolerances.all() {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(invalid(format!("tolerances.{name} must be positive, got {tol}")));
            }
        }
        if self.f.terms.iter().any(|t| t.mode.len() != d.dim) {
            return Err(invalid("every f term needs one wavenumber per axis"));
        }
        if self.v.preset == VectorPreset::Trig && self.v.components.0.len() != d.dim {
            return Err(invalid("v.components needs one polynomial per axis"));
        }
        if self.v.components.0.iter().flat_map(|p| &p.terms).any(|t| t.mode.len() != d.dim) {
            return Err(invalid("every v term needs one wavenumber per axis"));
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() {
                return Err(invalid("lambda must be finite"));
            }
        }
        self.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<ResolvedScenario, ConfigError> {
        let base = presets::build(self.metric.preset, &self.metric.params).map_err(|e| invalid(e.to_string()))?;
        let dim = self.domain.dim;
        let phi = match self.phi.preset {
            PhiPreset::Zero => PhiField::zero(dim),
            PhiPreset::Identity => PhiField::identity(dim),
            other => {
                let name = match other {
                    PhiPreset::Flat3 => PresetName::Flat3,
                    PhiPreset::Warped3 => PresetName::Warped3,
                    PhiPreset::RotPhi => PresetName::RotPhi,
                    _ => PresetName::GaussianBox,
                };
                presets::build(name, &self.phi.params).map_err(|e| invalid(e.to_string()))?.phi
            }
        };
        let lambda = self.lambda.unwrap_or(base.lambda);
        let v = match self.v.preset {
            VectorPreset::Scenario => base.v.clone(),
            VectorPreset::Zero => VectorField::zero(dim),
            VectorPreset::Radial => presets::radial_field(dim, lambda),
            VectorPreset::Trig => self.v.components.to_field(dim).map_err(|e| invalid(e.to_string()))?,
        };
        Ok(ResolvedScenario {
            id: self.scenario_id.clone(),
            metric_preset: self.metric.preset,
            domain: base.domain,
            metric: base.metric,
            phi,
            v,
            lambda,
            f: self.f.clone(),
        })
    }
}
