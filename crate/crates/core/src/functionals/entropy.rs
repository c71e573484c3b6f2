use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gradient, inner_gradients, SpaceTimeScalar};
use crate::curvature::{connection_with_threshold, scalar_calculus};
use crate::error::{Result, StarError};
use crate::fields::{
    integrate_with_density, packed_index, richardson_vector, volume_density, GridMetric, GridScalar, MetricField,
    DEFAULT_LEVELS,
};
use crate::flow::{CoupledTrajectory, MetricPath, UConvention};
use crate::grid_geometry::{LaplaceData, RStarMode, StarGrid};
use crate::tensor::EPS_PD;

/// Allowed `|∫u dV − 1|` before [`omega_entropy`] refuses.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyContext {
    pub tau: f64,
    pub convention: UConvention,
    pub dim: usize,
    /// Which scalar plays `R*`.
    pub r_star: RStarMode,
}

impl EntropyContext {
    pub fn new(tau: f64, convention: UConvention, dim: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(StarError::TauUnderflow { tau });
        }
        Ok(EntropyContext { tau, convention, dim, r_star: RStarMode::StarScalar })
    }

    pub fn with_r_star(mut self, mode: RStarMode) -> Self {
        self.r_star = mode;
        self
    }
}

#[derive(Clone, Debug)]
pub struct UVFields {
    pub u: GridScalar,
    /// `v = [τ(2Δf − |∇f|² + R*) + f − n]u`
    pub v: GridScalar,
    /// `∫u dV`
    pub normalization: f64,
    /// Adding this to `f` makes `∫u dV = 1`.
    pub shift: f64,
}

fn check_dims(g: &GridMetric, f: &GridScalar, ctx: &EntropyContext) -> Result<()> {
    if f.grid != g.grid || ctx.dim != g.dim() {
        return Err(StarError::ShapeMismatch("g, f and context disagree".into()));
    }
    if !(ctx.tau > 0.0) {
        return Err(StarError::TauUnderflow { tau: ctx.tau });
    }
    Ok(())
}

pub fn u_v_fields(g: &GridMetric, f: &GridScalar, star: &StarGrid, ctx: &EntropyContext) -> Result<UVFields> {
    check_dims(g, f, ctx)?;
    let calc = LaplaceData::new(g, EPS_PD)?.apply(f)?;
    let r = star.r_star_mode(ctx.r_star);
    let u = ctx.convention.weight(ctx.dim, ctx.tau, &f.data);
    let n = ctx.dim as f64;
    let v: Vec<f64> = (0..u.len())
        .map(|p| (ctx.tau * (2.0 * calc.laplacian[p] - calc.grad_sq[p] + r[p]) + f.data[p] - n) * u[p])
        .collect();
    let density = volume_density(g, EPS_PD)?;
    let normalization = integrate_with_density(&u, &density, &g.grid);
    Ok(UVFields {
        u: GridScalar::new(&g.grid, u)?,
        v: GridScalar::new(&g.grid, v)?,
        normalization,
        shift: normalization.ln(),
    })
}

/// `∫[τ(R* + |∇f|²) + f − n]u dV` without the normalization check.
pub fn omega_unchecked(g: &GridMetric, f: &GridScalar, star: &StarGrid, ctx: &EntropyContext) -> Result<(f64, f64)> {
    check_dims(g, f, ctx)?;
    let calc = LaplaceData::new(g, EPS_PD)?.apply(f)?;
    let r = star.r_star_mode(ctx.r_star);
    let u = ctx.convention.weight(ctx.dim, ctx.tau, &f.data);
    let n = ctx.dim as f64;
    let s: Vec<f64> =
        (0..u.len()).map(|p| (ctx.tau * (r[p] + calc.grad_sq[p]) + f.data[p] - n) * u[p]).collect();
    let density = volume_density(g, EPS_PD)?;
    Ok((integrate_with_density(&s, &density, &g.grid), integrate_with_density(&u, &density, &g.grid)))
}

/// ω-entropy; refuses when `|∫u dV − 1| > NORMALIZATION_TOLERANCE`.
pub fn omega_entropy(g: &GridMetric, f: &GridScalar, star: &StarGrid, ctx: &EntropyContext) -> Result<f64> {
    let (omega, integral) = omega_unchecked(g, f, star, ctx)?;
    if !((integral - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
        return Err(StarError::NotNormalized { integral, tolerance: NORMALIZATION_TOLERANCE });
    }
    Ok(omega)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatOperator {
    /// `◇ = ∂_t − Δ`
    Box,
    /// `◇* = −∂_t − Δ + R*`
    BoxStar,
}

fn heat_from_parts(which: HeatOperator, dt_w: &[f64], lap_w: &[f64], r: &[f64], w: &[f64]) -> Vec<f64> {
    (0..w.len())
        .map(|p| match which {
            HeatOperator::Box => dt_w[p] - lap_w[p],
            HeatOperator::BoxStar => -dt_w[p] - lap_w[p] + r[p] * w[p],
        })
        .collect()
}

/// `◇w` or `◇*w` at `t0` against the trajectory metric, `∂_tw` by Richardson
/// with first step `h0`; the trajectory must cover `t0 ± 4h0`.
pub fn conjugate_heat_apply(
    w: &dyn SpaceTimeScalar,
    traj: &CoupledTrajectory,
    t0: f64,
    which: HeatOperator,
    h0: Option<f64>,
) -> Result<GridScalar> {
    let h = h0.unwrap_or_else(|| default_heat_step(traj, t0));
    traj.path.check_window(t0 - 4.0 * h, t0 + 4.0 * h)?;
    let grid = traj.grid().clone();
    let dt_w = richardson_vector(|t| Ok(w.values(&grid, t)?.data), t0, Some(h), DEFAULT_LEVELS)?.value;
    let w0 = w.values(&grid, t0)?;
    let lap = LaplaceData::new(&traj.metric(t0)?, traj.eps_pd)?.apply(&w0)?.laplacian;
    let star = traj.star_at(t0)?;
    GridScalar::new(&grid, heat_from_parts(which, &dt_w, &lap, star.r_star_mode(traj.r_star_mode), &w0.data))
}

/// A quarter of the distance from `t0` to the nearest snapshot, capped at
/// an eighth of the metric step, so Richardson stencils stay inside one
/// interpolation piece.
fn default_heat_step(traj: &CoupledTrajectory, t0: f64) -> f64 {
    let times = traj.times();
    let gap = times.iter().map(|s| (s - t0).abs()).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let on_knot = times.iter().any(|s| *s == t0);
    let cap = traj.dt / 8.0;
    if on_knot {
        cap
    } else {
        (0.25 * gap).min(cap)
    }
}

/// Both sides of `dω/dt = −∫◇*v` at one instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thm31Report {
    pub t0: f64,
    pub tau: f64,
    pub h0: f64,
    pub omega: f64,
    pub u_integral: f64,
    pub domega_dt_fd: f64,
    pub domega_dt_fd_error: f64,
    /// `−∫◇*v dV` with `◇*v = −∂_tv − Δv + R*v` evaluated directly.
    pub minus_int_boxstar_v_direct: f64,
    /// `−∫` of the closed-form bracket expression for `◇*v`.
    pub minus_int_eq313: f64,
    pub residual_direct: f64,
    pub residual_eq313: f64,
    pub residual_direct_eq313: f64,
    /// `max|◇*u|` for `u = (4πτ)^{−n/2}e^{−f}`.
    pub boxstar_u_normalized: f64,
    /// `max|◇*u|` for `u = e^{−f}`.
    pub boxstar_u_literal: f64,
    /// `max|◇*u − (n/2τ)u|` for `u = e^{−f}`.
    pub boxstar_u_literal_shifted: f64,
}

struct Sample {
    v: Vec<f64>,
    u_norm: Vec<f64>,
    u_lit: Vec<f64>,
    omega: f64,
    u_integral: f64,
}

fn sample_at(traj: &CoupledTrajectory, t: f64, convention: UConvention) -> Result<(Sample, GridMetric, GridScalar, StarGrid)> {
    let g = traj.metric(t)?;
    let f = traj.f_at(t)?;
    let star = traj.star_at(t)?;
    let n = traj.dim();
    let ctx = EntropyContext::new(traj.tau(t), convention, n)?.with_r_star(traj.r_star_mode);
    let uv = u_v_fields(&g, &f, &star, &ctx)?;
    let (omega, u_integral) = omega_unchecked(&g, &f, &star, &ctx)?;
    let sample = Sample {
        v: uv.v.data,
        u_norm: UConvention::Normalized.weight(n, ctx.tau, &f.data),
        u_lit: UConvention::Literal.weight(n, ctx.tau, &f.data),
        omega,
        u_integral,
    };
    Ok((sample, g, f, star))
}

/// Closed-form `◇*v` with `Ric*` read as `sym S*`:
/// `2u(Δf − |∇f|² + R*) − un/2τ − v
///  − uτ[4⟨Ric*,Hess f⟩ − 2g(∇|∇f|²,∇f) + 4g(∇Δf,∇f) + 2|Hess f|²]`.
fn eq313(g: &GridMetric, f: &GridScalar, star: &StarGrid, ctx: &EntropyContext, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = ctx.dim;
    let nodes = MetricField::Grid(g.clone()).node_derivatives(&g.grid, 0.0, 1)?;
    let df = gradient(f)?;
    let mut second = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut a = vec![0u8; n];
            a[i] += 1;
            a[j] += 1;
            second.push(a);
        }
    }
    let ddf = f.spectrum().derivatives(&second)?;
    let s_sym = &star.s_sym;
    let per: Vec<(f64, f64, f64, f64, Vec<f64>)> = (0..g.grid.len())
        .into_par_iter()
        .map(|p| -> Result<(f64, f64, f64, f64, Vec<f64>)> {
            let conn = connection_with_threshold(&nodes.metric_jet(p), EPS_PD)?;
            let d: Vec<f64> = (0..n).map(|i| df[i][p]).collect();
            let dd: Vec<f64> = (0..n * n).map(|ij| ddf[ij][p]).collect();
            let calc = scalar_calculus(&conn, &d, &dd);
            let ginv = &conn.ginv;
            let pair = |a: &dyn Fn(usize, usize) -> f64, b: &dyn Fn(usize, usize) -> f64| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                s += ginv[i * n + k] * ginv[j * n + l] * a(i, j) * b(k, l);
                            }
                        }
                    }
                }
                s
            };
            let hess = |i: usize, j: usize| calc.hess[i * n + j];
            let ric = |i: usize, j: usize| s_sym.comps[packed_index(n, i.min(j), i.max(j))][p];
            Ok((calc.laplacian, calc.grad_sq, pair(&ric, &hess), pair(&hess, &hess), ginv.clone()))
        })
        .collect::<Result<_>>()?;
    let lap: Vec<f64> = per.iter().map(|q| q.0).collect();
    let grad_sq: Vec<f64> = per.iter().map(|q| q.1).collect();
    let packed_inv: Vec<Vec<f64>> = crate::fields::packed_pairs(n)
        .iter()
        .map(|&(i, j)| per.iter().map(|q| q.4[i * n + j]).collect())
        .collect();
    let d_grad_sq = gradient(&GridScalar::new(&g.grid, grad_sq.clone())?)?;
    let d_lap = gradient(&GridScalar::new(&g.grid, lap.clone())?)?;
    let term_grad_sq = inner_gradients(n, &packed_inv, &d_grad_sq, &df);
    let term_lap = inner_gradients(n, &packed_inv, &d_lap, &df);
    let r = star.r_star_mode(ctx.r_star);
    let (tau, nn) = (ctx.tau, n as f64);
    Ok((0..u.len())
        .map(|p| {
            let bracket = 4.0 * per[p].2 - 2.0 * term_grad_sq[p] + 4.0 * term_lap[p] + 2.0 * per[p].3;
            2.0 * u[p] * (lap[p] - grad_sq[p] + r[p]) - u[p] * nn / (2.0 * tau) - v[p] - u[p] * tau * bracket
        })
        .collect())
}

/// `dω/dt` by Richardson along the trajectory against `−∫◇*v` evaluated
/// directly and through the closed-form expression. `t0` should sit
/// strictly inside a snapshot interval.
pub fn thm31_check(
    traj: &CoupledTrajectory,
    t0: f64,
    convention: UConvention,
    h0: Option<f64>,
    levels: usize,
) -> Result<Thm31Report> {
    let h = h0.unwrap_or_else(|| default_heat_step(traj, t0));
    traj.path.check_window(t0 - 4.0 * h, t0 + 4.0 * h)?;
    let len = traj.grid().len();
    let est = richardson_vector(
        |t| {
            let (s, ..) = sample_at(traj, t, convention)?;
            let mut out = s.v;
            out.extend(s.u_norm);
            out.extend(s.u_lit);
            out.push(s.omega);
            Ok(out)
        },
        t0,
        Some(h),
        levels,
    )?;
    let (dv, rest) = est.value.split_at(len);
    let (du_norm, rest) = rest.split_at(len);
    let (du_lit, rest) = rest.split_at(len);
    let domega = rest[0];
    let domega_err = est.error[3 * len];

    let (s, g, f, star) = sample_at(traj, t0, convention)?;
    let n = traj.dim();
    let tau = traj.tau(t0);
    let ctx = EntropyContext::new(tau, convention, n)?.with_r_star(traj.r_star_mode);
    let laplace = LaplaceData::new(&g, traj.eps_pd)?;
    let r = star.r_star_mode(traj.r_star_mode);
    let density = volume_density(&g, traj.eps_pd)?;
    let integrate = |a: &[f64]| integrate_with_density(a, &density, &g.grid);
    let boxstar = |w: &[f64], dw: &[f64]| -> Result<Vec<f64>> {
        let lap = laplace.apply(&GridScalar::new(&g.grid, w.to_vec())?)?.laplacian;
        Ok(heat_from_parts(HeatOperator::BoxStar, dw, &lap, r, w))
    };
    let direct = -integrate(&boxstar(&s.v, dv)?);
    let u_conv = convention.weight(n, tau, &f.data);
    let closed = -integrate(&eq313(&g, &f, &star, &ctx, &u_conv, &s.v)?);
    let max_abs = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bu_norm = boxstar(&s.u_norm, du_norm)?;
    let bu_lit = boxstar(&s.u_lit, du_lit)?;
    let shift = n as f64 / (2.0 * tau);
    let shifted: Vec<f64> = bu_lit.iter().zip(&s.u_lit).map(|(b, u)| b - shift * u).collect();
    Ok(Thm31Report {
        t0,
        tau,
        h0: h,
        omega: s.omega,
        u_integral: s.u_integral,
        domega_dt_fd: domega,
        domega_dt_fd_error: domega_err,
        minus_int_boxstar_v_direct: direct,
        minus_int_eq313: closed,
        residual_direct: (domega - direct).abs(),
        residual_eq313: (domega - closed).abs(),
        residual_direct_eq313: (direct - closed).abs(),
        boxstar_u_normalized: max_abs(&bu_norm),
        boxstar_u_literal: max_abs(&bu_lit),
        boxstar_u_literal_shifted: max_abs(&shifted),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fields::{Domain, Grid, PhiField, ScalarField};
    use crate::flow::{integrate_coupled_system, CoupledConfig, StarRicciFlow};
    use crate::grid_geometry::star_on_grid;
    use crate::oracle::adaptive_quadrature;
    use std::f64::consts::PI;

    fn flat(n: usize) -> (Grid, GridMetric, StarGrid) {
        let grid = Grid::new(&Domain::unit_torus(3), n).unwrap();
        let g = MetricField::flat(3).to_grid(&grid, 0.0).unwrap();
        let star = star_on_grid(&g, &[], true, EPS_PD).unwrap();
        (grid, g, star)
    }

    fn flat_trajectory(c: f64) -> CoupledTrajectory {
        let (grid, g, _) = flat(8);
        let flow = StarRicciFlow::new(&PhiField::zero(3), &grid).unwrap();
        let cfg = CoupledConfig { horizon: 0.4, dt: 0.01, ..CoupledConfig::default() };
        integrate_coupled_system(&flow, &g, &GridScalar::constant(&grid, c), &cfg).unwrap()
    }

    #[test]
    fn constant_f_fields() {
        let (grid, g, star) = flat(8);
        let c = 0.7;
        let ctx = EntropyContext::new(0.5, UConvention::Literal, 3).unwrap();
        let uv = u_v_fields(&g, &GridScalar::constant(&grid, c), &star, &ctx).unwrap();
        for p in 0..grid.len() {
            assert!((uv.v.data[p] - (c - 3.0) * uv.u.data[p]).abs() < 1e-15);
        }
        let ctx = EntropyContext::new(0.5, UConvention::Normalized, 3).unwrap();
        let uv = u_v_fields(&g, &GridScalar::constant(&grid, c), &star, &ctx).unwrap();
        let shifted = GridScalar::constant(&grid, c + uv.shift);
        let uv2 = u_v_fields(&g, &shifted, &star, &ctx).unwrap();
        assert!((uv2.normalization - 1.0).abs() < 1e-13);
        assert!((uv2.u.data[0] - (2.0 * PI).powi(-3)).abs() < 1e-15);
        let omega = omega_entropy(&g, &shifted, &star, &ctx).unwrap();
        assert!((omega - (c + uv.shift - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn not_normalized_rejected() {
        let (grid, g, star) = flat(8);
        let ctx = EntropyContext::new(1.0, UConvention::Normalized, 3).unwrap();
        let r = omega_entropy(&g, &GridScalar::constant(&grid, 0.0), &star, &ctx);
        assert!(matches!(r, Err(StarError::NotNormalized { .. })));
        assert!(matches!(EntropyContext::new(0.0, UConvention::Literal, 3), Err(StarError::TauUnderflow { .. })));
    }

    #[test]
    fn omega_cosine_oracle_and_scaling() {
        let (grid, g, star) = flat(32);
        let a = 0.8;
        let tau = 0.6;
        let ctx = EntropyContext::new(tau, UConvention::Normalized, 3).unwrap();
        let raw = GridScalar::sample(&grid, |x| a * x[0].cos());
        let shift = u_v_fields(&g, &raw, &star, &ctx).unwrap().shift;
        let f = GridScalar::new(&grid, raw.data.iter().map(|v| v + shift).collect()).unwrap();
        let omega = omega_entropy(&g, &f, &star, &ctx).unwrap();
        let pre = ctx.convention.prefactor(3, tau) * (2.0 * PI).powi(2);
        let oracle = pre
            * adaptive_quadrature(
                |x| (tau * a * a * x.sin().powi(2) + a * x.cos() + shift - 3.0) * (-a * x.cos() - shift).exp(),
                0.0,
                2.0 * PI,
                1e-14,
            );
        assert!((omega - oracle).abs() < 1e-8, "{omega} vs {oracle}");

        let scale = 2.5;
        let gs = g.axpby(scale, &g, 0.0);
        let star_s = star_on_grid(&gs, &[], true, EPS_PD).unwrap();
        let ctx_s = EntropyContext::new(scale * tau, UConvention::Normalized, 3).unwrap();
        let omega_s = omega_entropy(&gs, &f, &star_s, &ctx_s).unwrap();
        assert!((omega_s - omega).abs() < 1e-8);
    }

    #[test]
    fn heat_operator_trivial_cases() {
        let traj = flat_trajectory(0.0);
        let one = ScalarField::Analytic(Expr::c(1.0));
        let w = conjugate_heat_apply(&one, &traj, 0.2, HeatOperator::BoxStar, None).unwrap();
        assert!(w.max_abs() < 1e-14);
        let t = ScalarField::Analytic(Expr::t());
        let w = conjugate_heat_apply(&t, &traj, 0.2, HeatOperator::BoxStar, None).unwrap();
        assert!(w.data.iter().all(|v| (v + 1.0).abs() < 1e-10));
        let s = ScalarField::Analytic(Expr::x(0).sin());
        let w = conjugate_heat_apply(&s, &traj, 0.2, HeatOperator::BoxStar, None).unwrap();
        let expect = GridScalar::sample(traj.grid(), |x| x[0].sin());
        assert!(w.data.iter().zip(&expect.data).all(|(a, b)| (a - b).abs() < 1e-12));
        let w = conjugate_heat_apply(&s, &traj, 0.2, HeatOperator::Box, None).unwrap();
        assert!(w.data.iter().zip(&expect.data).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(
            conjugate_heat_apply(&one, &traj, 0.39, HeatOperator::BoxStar, Some(0.01)),
            Err(StarError::WindowExceedsTrajectory { .. })
        ));
    }

    #[test]
    fn thm31_flat_constant() {
        let traj = flat_trajectory(0.3);
        let t0 = 0.225;
        let r = thm31_check(&traj, t0, UConvention::Normalized, None, DEFAULT_LEVELS).unwrap();
        let expect = 3.0 / (2.0 * traj.tau(t0));
        assert!((r.domega_dt_fd - expect).abs() < 1e-6, "{r:?}");
        assert!((r.minus_int_boxstar_v_direct - r.domega_dt_fd).abs() < 1e-6);
        assert!(r.boxstar_u_normalized < 1e-8);
        assert!(r.boxstar_u_literal_shifted < 1e-8, "{r:?}");
        assert!(r.boxstar_u_literal > 0.1);
    }
}
