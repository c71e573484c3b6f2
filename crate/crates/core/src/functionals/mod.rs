//! Soliton residuals, the F-functional and its time derivative, the
//! ω-entropy with its `u`/`v` fields, the heat operators and the transport
//! identity `dω/dt = −∫◇*v`.

mod entropy;

pub use entropy::{
    conjugate_heat_apply, omega_entropy, omega_unchecked, thm31_check, u_v_fields, EntropyContext, HeatOperator,
    Thm31Report, UVFields, NORMALIZATION_TOLERANCE,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_jet, lie_derivative_metric, star_curvature};
use crate::error::{Result, StarError};
use crate::fields::{
    integrate_with_density, packed_index, richardson_time_derivative, volume_density, Domain, Grid, GridMetric,
    GridScalar, MetricField, PhiField, ScalarField, VectorField,
};
use crate::flow::MetricPath;
use crate::grid_geometry::{trace_on_grid, LaplaceData};
use crate::jet::{Jet, Scalar};
use crate::tensor::EPS_PD;

/// Default integrand constant of the F-functional.
pub const F_INTEGRAND_CONSTANT: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolitonVariant {
    /// `£_Vg + 2Ric − λg`
    Ricci,
    /// `£_Vg + 2S* + 2λg`
    Star,
}

#[derive(Clone, Debug)]
pub struct SolitonData {
    pub v: VectorField,
    pub lambda: f64,
    pub variant: SolitonVariant,
}

/// `|T|_g = (g^{ia}g^{jb}T_ij T_ab)^{1/2}` for a full `n×n` tensor.
pub fn tensor_norm(n: usize, ginv: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s += ginv[i * n + a] * ginv[j * n + b] * t[i * n + j] * t[a * n + b];
                }
            }
        }
    }
    s.max(0.0).sqrt()
}

/// Pointwise soliton residual (full `n×n`) at each point and its largest
/// `g`-norm.
pub fn soliton_residual(
    domain: &Domain,
    g: &MetricField,
    phi: &PhiField,
    data: &SolitonData,
    points: &[Vec<f64>],
    t: f64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = g.dim();
    let per: Vec<(Vec<f64>, f64)> = points
        .par_iter()
        .map(|x| -> Result<(Vec<f64>, f64)> {
            let geom = curvature_jet(&g.metric_jet(domain, x, t, 2)?)?;
            let conn = &geom.conn;
            let gv: Vec<f64> = conn.g.iter().map(|j| j.value()).collect();
            let ginv: Vec<f64> = conn.ginv.iter().map(|j| j.value()).collect();
            let vj = data.v.eval_jets(domain, x, t, 1)?;
            let dv: Vec<Jet> = (0..n * n).map(|ik| vj[ik % n].deriv(ik / n)).collect();
            let lie: Vec<f64> = lie_derivative_metric(conn, &vj, &dv).iter().map(|j| j.value()).collect();
            let res: Vec<f64> = match data.variant {
                SolitonVariant::Ricci => {
                    (0..n * n).map(|a| lie[a] + 2.0 * geom.ricci[a].value() - data.lambda * gv[a]).collect()
                }
                SolitonVariant::Star => {
                    let star = star_curvature(&geom, &phi.eval_jets(domain, x, 0)?)?;
                    (0..n * n).map(|a| lie[a] + 2.0 * star.s_star[a].value() + 2.0 * data.lambda * gv[a]).collect()
                }
            };
            let norm = tensor_norm(n, &ginv, &res);
            Ok((res, norm))
        })
        .collect::<Result<_>>()?;
    let sup = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok((per.into_iter().map(|p| p.0).collect(), sup))
}

/// First partials of grid data.
pub(crate) fn gradient(f: &GridScalar) -> Result<Vec<Vec<f64>>> {
    let n = f.grid.dim();
    let alphas: Vec<Vec<u8>> = (0..n)
        .map(|i| {
            let mut a = vec![0u8; n];
            a[i] = 1;
            a
        })
        .collect();
    f.spectrum().derivatives(&alphas)
}

/// `g^{ij}∂_ia ∂_jb` at every node from packed `g^{ij}`.
pub(crate) fn inner_gradients(n: usize, ginv: &[Vec<f64>], da: &[Vec<f64>], db: &[Vec<f64>]) -> Vec<f64> {
    let len = da[0].len();
    (0..len)
        .map(|p| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += ginv[packed_index(n, i.min(j), i.max(j))][p] * da[i][p] * db[j][p];
                }
            }
            s
        })
        .collect()
}

/// `∫(c + |∇f|²)e^{−f} dV` on a torus grid with `c` the integrand constant.
pub fn f_functional(g: &GridMetric, f: &GridScalar, constant: f64) -> Result<f64> {
    if f.grid != g.grid {
        return Err(StarError::ShapeMismatch("f and g live on different grids".into()));
    }
    let n = g.dim();
    let lap = LaplaceData::new(g, EPS_PD)?;
    let df = gradient(f)?;
    let grad_sq = inner_gradients(n, &lap.ginv, &df, &df);
    let density = volume_density(g, EPS_PD)?;
    let s: Vec<f64> = f.data.iter().zip(&grad_sq).map(|(v, q)| (constant + q) * (-v).exp()).collect();
    Ok(integrate_with_density(&s, &density, &g.grid))
}

/// A time-dependent scalar on a grid with access to `∂_t`.
pub trait SpaceTimeScalar: Sync {
    fn values(&self, grid: &Grid, t: f64) -> Result<GridScalar>;

    /// Defaults to a Richardson-extrapolated central difference.
    fn time_derivative(&self, grid: &Grid, t: f64) -> Result<GridScalar> {
        let est = crate::fields::richardson_vector(
            |s| Ok(self.values(grid, s)?.data),
            t,
            None,
            crate::fields::DEFAULT_LEVELS,
        )?;
        GridScalar::new(grid, est.value)
    }
}

impl SpaceTimeScalar for ScalarField {
    fn values(&self, grid: &Grid, t: f64) -> Result<GridScalar> {
        self.to_grid(grid, t)
    }

    fn time_derivative(&self, grid: &Grid, t: f64) -> Result<GridScalar> {
        match self {
            ScalarField::Analytic(e) => {
                let data = (0..grid.len()).into_par_iter().map(|p| e.time_derivative(&grid.point(p), t).1).collect();
                GridScalar::new(grid, data)
            }
            ScalarField::Grid(_) => Ok(GridScalar::constant(grid, 0.0)),
        }
    }
}

/// Grid samples produced by a closure.
pub struct FnScalar<F>(pub F);

impl<F> SpaceTimeScalar for FnScalar<F>
where
    F: Fn(f64) -> Result<GridScalar> + Sync,
{
    fn values(&self, _grid: &Grid, t: f64) -> Result<GridScalar> {
        (self.0)(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaMode {
    Chain,
    Paper,
}

/// Both evaluations of `dF/dt` and the Richardson derivative of `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct DfDtCheck {
    pub chain: f64,
    pub paper: f64,
    pub fd_value: f64,
    pub fd_error: f64,
}

impl DfDtCheck {
    pub fn value(&self, mode: FormulaMode) -> f64 {
        match mode {
            FormulaMode::Chain => self.chain,
            FormulaMode::Paper => self.paper,
        }
    }
}

/// With `h = ∂_tg`:
/// chain `∫[−h(∇f,∇f) + 2g(∇ḟ,∇f) + (c + |∇f|²)(−ḟ + ½tr_g h)]e^{−f}dV`,
/// paper `∫[h(∇f,∇f) − 2ḟ(Δf − |∇f|²) + (c + |∇f|²)(−ḟ + ½tr_g h)]e^{−f}dV`.
pub fn df_dt_check(
    path: &dyn MetricPath,
    f: &dyn SpaceTimeScalar,
    t0: f64,
    constant: f64,
    h0: Option<f64>,
    levels: usize,
) -> Result<DfDtCheck> {
    let grid = path.grid().clone();
    let n = grid.dim();
    let h_step = h0.unwrap_or_else(|| crate::fields::default_step(t0));
    path.check_window(t0 - h_step, t0 + h_step)?;
    let g = path.metric(t0)?;
    let h = path.metric_dot(t0)?;
    let fv = f.values(&grid, t0)?;
    let fd = f.time_derivative(&grid, t0)?;
    let lap = LaplaceData::new(&g, EPS_PD)?;
    let calc = lap.apply(&fv)?;
    let df = gradient(&fv)?;
    let dfd = gradient(&fd)?;
    let cross = inner_gradients(n, &lap.ginv, &dfd, &df);
    let tr_h = trace_on_grid(&g, &h, EPS_PD)?;
    // ∇f = g⁻¹df, h(∇f,∇f)
    let h_grad: Vec<f64> = (0..grid.len())
        .map(|p| {
            let ginv = |i: usize, j: usize| lap.ginv[packed_index(n, i.min(j), i.max(j))][p];
            let up: Vec<f64> = (0..n).map(|i| (0..n).map(|j| ginv(i, j) * df[j][p]).sum()).collect();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += h.comps[packed_index(n, i.min(j), i.max(j))][p] * up[i] * up[j];
                }
            }
            s
        })
        .collect();
    let density = volume_density(&g, EPS_PD)?;
    let mut chain = Vec::with_capacity(grid.len());
    let mut paper = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let w = (-fv.data[p]).exp();
        let common = (constant + calc.grad_sq[p]) * (-fd.data[p] + 0.5 * tr_h[p]);
        chain.push((-h_grad[p] + 2.0 * cross[p] + common) * w);
        paper.push((h_grad[p] - 2.0 * fd.data[p] * (calc.laplacian[p] - calc.grad_sq[p]) + common) * w);
    }
    let est = richardson_time_derivative(
        |t| f_functional(&path.metric(t)?, &f.values(&grid, t)?, constant),
        t0,
        Some(h_step),
        levels,
    )?;
    Ok(DfDtCheck {
        chain: integrate_with_density(&chain, &density, &grid),
        paper: integrate_with_density(&paper, &density, &grid),
        fd_value: est.value,
        fd_error: est.error,
    })
}
