//! Named scenarios: `flat3`, `warped3`, `rot-phi` and `gaussian-box`, plus
//! trigonometric scalar and vector fields.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::expr::{Expr, TrigKind, TrigPoly};
use crate::fields::{Domain, MetricField, PhiField, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Flat3,
    Warped3,
    RotPhi,
    GaussianBox,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [PresetName::Flat3, PresetName::Warped3, PresetName::RotPhi, PresetName::GaussianBox];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Flat3 => "flat3",
            PresetName::Warped3 => "warped3",
            PresetName::RotPhi => "rot-phi",
            PresetName::GaussianBox => "gaussian-box",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| StarError::InvalidArgument(format!("unknown preset `{s}`")))
    }
}

/// Tunable parameters; each preset reads the ones it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    /// Warp exponent `u(x)` in `diag(1, 1, e^{2u})`.
    pub warp: TrigPoly,
    /// Rotation angle of the constant `φ`.
    pub theta: f64,
    /// Soliton constant of the Gaussian box.
    pub lambda: f64,
    /// Half-width of the analytic box.
    pub half_width: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            warp: TrigPoly::default().term(1.0, TrigKind::Sin, &[1, 0, 0]),
            theta: FRAC_PI_2,
            lambda: 0.25,
            half_width: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: PresetName,
    pub domain: Domain,
    pub metric: MetricField,
    pub phi: PhiField,
    /// Soliton field and constant (zero except on the Gaussian box).
    pub v: VectorField,
    pub lambda: f64,
}

fn warped_metric(u: &Expr) -> MetricField {
    MetricField::diagonal(vec![Expr::c(1.0), Expr::c(1.0), (u.clone() * 2.0).exp()])
}

/// `φ∂_x = e^{−u}∂_z`, `φ∂_z = −e^{u}∂_x`, `φ∂_y = 0`: a `g`-isometric
/// quarter turn in the `xz`-plane of `diag(1, 1, e^{2u})`.
pub fn warped_phi(u: &Expr) -> PhiField {
    let z = Expr::c(0.0);
    let mut comps = vec![z; 9];
    comps[2] = -(u.clone().exp());
    comps[6] = (-u.clone()).exp();
    PhiField::Analytic { dim: 3, comps }
}

/// Constant rotation by `θ` in the `xy`-plane, zero on `∂_z`.
pub fn rotation_phi(theta: f64) -> PhiField {
    let (s, c) = theta.sin_cos();
    let mut comps = vec![Expr::c(0.0); 9];
    comps[0] = Expr::c(c);
    comps[1] = Expr::c(-s);
    comps[3] = Expr::c(s);
    comps[4] = Expr::c(c);
    PhiField::Analytic { dim: 3, comps }
}

/// `V = −λ(x∂_x + y∂_y + z∂_z)`.
pub fn radial_field(dim: usize, lambda: f64) -> VectorField {
    VectorField::Analytic((0..dim).map(|i| Expr::x(i) * -lambda).collect())
}

pub fn build(name: PresetName, params: &PresetParams) -> Result<Scenario> {
    let u = params.warp.to_expr();
    let scenario = match name {
        PresetName::Flat3 => Scenario {
            name,
            domain: Domain::unit_torus(3),
            metric: MetricField::flat(3),
            phi: rotation_phi(params.theta),
            v: VectorField::zero(3),
            lambda: 0.0,
        },
        PresetName::Warped3 => Scenario {
            name,
            domain: Domain::unit_torus(3),
            metric: warped_metric(&u),
            phi: warped_phi(&u),
            v: VectorField::zero(3),
            lambda: 0.0,
        },
        PresetName::RotPhi => Scenario {
            name,
            domain: Domain::unit_torus(3),
            metric: warped_metric(&u),
            phi: rotation_phi(params.theta),
            v: VectorField::zero(3),
            lambda: 0.0,
        },
        PresetName::GaussianBox => {
            let w = params.half_width;
            if !(w > 0.0) {
                return Err(StarError::InvalidArgument(format!("box half-width must be positive, got {w}")));
            }
            Scenario {
                name,
                domain: Domain::analytic_box(&[-w; 3], &[w; 3])?,
                metric: MetricField::flat(3),
                phi: rotation_phi(params.theta),
                v: radial_field(3, params.lambda),
                lambda: params.lambda,
            }
        }
    };
    Ok(scenario)
}

/// Trigonometric vector field, one polynomial per component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrigVector(pub Vec<TrigPoly>);

impl TrigVector {
    pub fn to_field(&self, dim: usize) -> Result<VectorField> {
        if self.0.is_empty() {
            return Ok(VectorField::zero(dim));
        }
        if self.0.len() != dim {
            return Err(StarError::ShapeMismatch(format!("{} vector components for dimension {dim}", self.0.len())));
        }
        Ok(VectorField::Analytic(self.0.iter().map(TrigPoly::to_expr).collect()))
    }
}

/// `f = Σ c·t^k·trig(m·x)` as an analytic scalar field.
pub fn trig_scalar(p: &TrigPoly) -> ScalarField {
    ScalarField::Analytic(p.to_expr())
}

fn random_poly(rng: &mut ChaCha8Rng, dim: usize, terms: usize, max_mode: i32, amplitude: f64) -> TrigPoly {
    let raw: Vec<(f64, TrigKind, Vec<i32>)> = (0..terms)
        .map(|_| {
            let kind = if rng.gen_bool(0.5) { TrigKind::Sin } else { TrigKind::Cos };
            let mut mode: Vec<i32> = (0..dim).map(|_| rng.gen_range(-max_mode..=max_mode)).collect();
            if mode.iter().all(|&m| m == 0) {
                mode[rng.gen_range(0..dim)] = 1;
            }
            (rng.gen_range(-1.0..1.0), kind, mode)
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.0.abs()).sum::<f64>().max(1e-300);
    raw.into_iter().fold(TrigPoly::default(), |p, (c, kind, mode)| p.term(amplitude * c / total, kind, &mode))
}

/// Band-limited random function with `Σ|coeff| = amplitude`.
pub fn random_band_limited(seed: u64, dim: usize, max_mode: i32, amplitude: f64) -> TrigPoly {
    random_poly(&mut ChaCha8Rng::seed_from_u64(seed), dim, 4, max_mode, amplitude)
}

/// Smooth positive-definite torus metric: diagonal entries `1.5 + 0.3p_i`,
/// off-diagonal `0.2q_ij` with `|p_i|, |q_ij| ≤ 1`, so the smallest
/// eigenvalue is at least `1.2 − 0.2(n − 1)`.
pub fn random_smooth_metric(seed: u64, dim: usize) -> MetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comps = vec![Expr::c(0.0); dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let p = random_poly(&mut rng, dim, 3, 2, 1.0).to_expr();
            let e = if i == j { p * 0.3 + 1.5 } else { p * 0.2 };
            comps[i * dim + j] = e.clone();
            comps[j * dim + i] = e;
        }
    }
    MetricField::Analytic { dim, comps }
}
