use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{hermite_basis, hermite_basis_ds, locate};
use super::{integrate_flow, FlowState, HermiteMetricPath, MetricPath, StarRicciFlow, DEFAULT_GUARD};
use crate::error::{Result, StarError};
use crate::fields::{integrate_with_density, volume_density, Grid, GridMetric, GridScalar};
use crate::grid_geometry::{laplacian_spectral_radius, LaplaceData, RStarMode, StarGrid};
use crate::tensor::EPS_PD;

/// Weight attached to `f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UConvention {
    /// `u = e^{−f}`
    Literal,
    /// `u = (4πτ)^{−n/2} e^{−f}`
    #[default]
    Normalized,
}

impl UConvention {
    pub fn prefactor(self, dim: usize, tau: f64) -> f64 {
        match self {
            UConvention::Literal => 1.0,
            UConvention::Normalized => (4.0 * std::f64::consts::PI * tau).powf(-(dim as f64) / 2.0),
        }
    }

    pub fn weight(self, dim: usize, tau: f64, f: &[f64]) -> Vec<f64> {
        let c = self.prefactor(dim, tau);
        f.iter().map(|v| c * (-v).exp()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CoupledConfig {
    pub tau0: f64,
    pub horizon: f64,
    /// Requested metric step; the guard may reduce it.
    pub dt: f64,
    pub guard_c: f64,
    /// `dt_f·ρ(−Δ)` bound for the backward RK4 substeps.
    pub f_stability: f64,
    pub r_star: RStarMode,
    /// Shift `f(T)` so that `∫u dV = 1` under this convention.
    pub normalize: Option<UConvention>,
    pub eps_pd: f64,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        CoupledConfig {
            tau0: 1.0,
            horizon: 0.1,
            dt: 0.01,
            guard_c: DEFAULT_GUARD,
            f_stability: 2.0,
            r_star: RStarMode::StarScalar,
            normalize: Some(UConvention::Normalized),
            eps_pd: EPS_PD,
        }
    }
}

/// Forward metric snapshots and the backward solution
/// `∂_t f = −Δf + |∇f|² − R* + n/2τ`, `τ = τ0 − t`.
#[derive(Clone, Debug)]
pub struct CoupledTrajectory {
    pub flow: StarRicciFlow,
    pub path: HermiteMetricPath,
    pub stars: Vec<StarGrid>,
    pub tau0: f64,
    pub r_star_mode: RStarMode,
    pub f: Vec<GridScalar>,
    pub f_dot: Vec<Vec<f64>>,
    /// Constant added to the supplied final data.
    pub f_shift: f64,
    pub dt: f64,
    pub f_substeps: usize,
    pub min_eig: Vec<f64>,
    pub asymmetry: Vec<f64>,
    pub eps_pd: f64,
}

struct Geometry {
    laplace: LaplaceData,
    r_star: Vec<f64>,
}

impl CoupledTrajectory {
    pub fn grid(&self) -> &Grid {
        self.path.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn times(&self) -> &[f64] {
        self.path.times()
    }

    pub fn tau(&self, t: f64) -> f64 {
        self.tau0 - t
    }

    pub fn state(&self, k: usize) -> FlowState {
        let t = self.times()[k];
        FlowState { t, tau: self.tau(t), g: self.path.snapshots()[k].clone(), f: Some(self.f[k].clone()) }
    }

    pub fn metric(&self, t: f64) -> Result<GridMetric> {
        self.path.metric(t)
    }

    /// Cubic Hermite interpolant of `f` through `(f_k, ḟ_k)`.
    pub fn f_at(&self, t: f64) -> Result<GridScalar> {
        let (k, s) = locate(self.times(), t)?;
        let h = self.times()[k + 1] - self.times()[k];
        let b = hermite_basis(s);
        self.combine_f(k, [b[0], b[1] * h, b[2], b[3] * h])
    }

    pub fn f_dot_at(&self, t: f64) -> Result<GridScalar> {
        let (k, s) = locate(self.times(), t)?;
        let h = self.times()[k + 1] - self.times()[k];
        let b = hermite_basis_ds(s);
        self.combine_f(k, [b[0] / h, b[1], b[2] / h, b[3]])
    }

    fn combine_f(&self, k: usize, w: [f64; 4]) -> Result<GridScalar> {
        let (a, b) = (&self.f[k].data, &self.f[k + 1].data);
        let (da, db) = (&self.f_dot[k], &self.f_dot[k + 1]);
        let data = (0..a.len()).map(|p| w[0] * a[p] + w[1] * da[p] + w[2] * b[p] + w[3] * db[p]).collect();
        GridScalar::new(self.grid(), data)
    }

    /// *-curvature of the interpolated metric at `t`.
    pub fn star_at(&self, t: f64) -> Result<StarGrid> {
        self.flow.star(&self.metric(t)?)
    }

    /// `∫u dV` at every snapshot.
    pub fn u_integrals(&self, convention: UConvention) -> Result<Vec<f64>> {
        let n = self.dim();
        self.times()
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let u = convention.weight(n, self.tau(t), &self.f[k].data);
                let density = volume_density(&self.path.snapshots()[k], self.eps_pd)?;
                Ok(integrate_with_density(&u, &density, self.grid()))
            })
            .collect()
    }

    /// Columns `t,tau,min_eig,u_integral`.
    pub fn write_csv<W: Write>(&self, mut w: W, convention: UConvention) -> Result<()> {
        let integrals = self.u_integrals(convention)?;
        writeln!(w, "t,tau,min_eig,u_integral")?;
        for (k, &t) in self.times().iter().enumerate() {
            writeln!(w, "{},{},{},{}", t, self.tau(t), self.min_eig[k], integrals[k])?;
        }
        Ok(())
    }
}

fn f_rhs(geom: &Geometry, f: &GridScalar, n: usize, tau: f64) -> Result<Vec<f64>> {
    let calc = geom.laplace.apply(f)?;
    let c = n as f64 / (2.0 * tau);
    let out: Vec<f64> = (0..f.data.len())
        .map(|p| -calc.laplacian[p] + calc.grad_sq[p] - geom.r_star[p] + c)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(StarError::NonFinite("f equation right-hand side".into()));
    }
    Ok(out)
}

/// Lagrange weights for the nodes `xs` at `x`.
fn lagrange_weights(xs: &[f64], x: f64) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            xs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &xj)| (x - xj) / (xs[i] - xj)).product()
        })
        .collect()
}

struct SnapshotGeometry<'a> {
    times: &'a [f64],
    geoms: &'a [Geometry],
}

impl SnapshotGeometry<'_> {
    /// Cubic interpolation in time through the four snapshots nearest `t`.
    fn at(&self, t: f64) -> Result<Geometry> {
        let (k, s) = locate(self.times, t)?;
        if s == 0.0 {
            return Ok(clone_geometry(&self.geoms[k]));
        }
        if s == 1.0 {
            return Ok(clone_geometry(&self.geoms[k + 1]));
        }
        let m = self.times.len();
        let width = m.min(4);
        let first = (k as isize - 1).clamp(0, (m - width) as isize) as usize;
        let idx: Vec<usize> = (first..first + width).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| self.times[i]).collect();
        let w = lagrange_weights(&xs, t);
        let blend = |arrays: Vec<&Vec<f64>>| -> Vec<f64> {
            (0..arrays[0].len())
                .map(|p| arrays.iter().zip(&w).map(|(a, wi)| wi * a[p]).sum())
                .collect()
        };
        let base = &self.geoms[idx[0]].laplace;
        let count = base.arrays().count();
        let per_snapshot: Vec<Vec<&Vec<f64>>> = idx.iter().map(|&i| self.geoms[i].laplace.arrays().collect()).collect();
        let arrays: Vec<Vec<f64>> =
            (0..count).into_par_iter().map(|a| blend(per_snapshot.iter().map(|v| v[a]).collect())).collect();
        Ok(Geometry {
            laplace: LaplaceData::from_arrays(base.dim, arrays)?,
            r_star: blend(idx.iter().map(|&i| &self.geoms[i].r_star).collect()),
        })
    }
}

fn clone_geometry(g: &Geometry) -> Geometry {
    Geometry { laplace: g.laplace.clone(), r_star: g.r_star.clone() }
}

/// Integrates `g` forward on `[0, T]`, then `f` backward from `f(T) = fT`
/// (plus the normalizing shift) against the stored metric snapshots.
pub fn integrate_coupled_system(
    flow: &StarRicciFlow,
    g0: &GridMetric,
    f_final: &GridScalar,
    cfg: &CoupledConfig,
) -> Result<CoupledTrajectory> {
    let horizon = cfg.horizon;
    if !(horizon < cfg.tau0) {
        return Err(StarError::TauUnderflow { tau: cfg.tau0 - horizon });
    }
    if f_final.grid != g0.grid {
        return Err(StarError::ShapeMismatch("f and g live on different grids".into()));
    }
    let n = g0.dim();
    let traj = integrate_flow(flow, g0, 0.0, horizon, cfg.dt, cfg.guard_c)?;
    let times = traj.path.times().to_vec();
    let snapshots = traj.path.snapshots();
    let last = times.len() - 1;

    let geoms: Vec<Geometry> = snapshots
        .iter()
        .zip(&traj.stars)
        .map(|(g, star)| {
            Ok(Geometry {
                laplace: LaplaceData::new(g, cfg.eps_pd)?,
                r_star: star.r_star_mode(cfg.r_star).to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let mut rho: f64 = 0.0;
    for g in snapshots {
        rho = rho.max(laplacian_spectral_radius(g, cfg.eps_pd)?);
    }
    let dt_f_max = if rho > 0.0 { cfg.f_stability / rho } else { f64::INFINITY };
    let substeps = (traj.dt / dt_f_max - 1e-9).ceil().max(1.0) as usize;

    let f_shift = match cfg.normalize {
        Some(conv) => {
            let u = conv.weight(n, cfg.tau0 - horizon, &f_final.data);
            let density = volume_density(&snapshots[last], cfg.eps_pd)?;
            integrate_with_density(&u, &density, &g0.grid).ln()
        }
        None => 0.0,
    };
    let tau = |t: f64| cfg.tau0 - t;
    let interp = SnapshotGeometry { times: &times, geoms: &geoms };

    let mut f_vals = vec![GridScalar::constant(&g0.grid, 0.0); times.len()];
    let mut f_dots = vec![Vec::new(); times.len()];
    let mut f = GridScalar::new(&g0.grid, f_final.data.iter().map(|v| v + f_shift).collect())?;
    f_dots[last] = f_rhs(&geoms[last], &f, n, tau(times[last]))?;
    f_vals[last] = f.clone();

    let axpy = |f: &GridScalar, a: f64, k: &[f64]| -> Result<GridScalar> {
        GridScalar::new(&f.grid, f.data.iter().zip(k).map(|(x, y)| x + a * y).collect())
    };
    for k in (1..=last).rev() {
        let (t_hi, t_lo) = (times[k], times[k - 1]);
        let delta = (t_hi - t_lo) / substeps as f64;
        let mut k1 = f_dots[k].clone();
        for j in 0..substeps {
            let t = t_hi - j as f64 * delta;
            let t_mid = t - 0.5 * delta;
            let t_next = if j + 1 == substeps { t_lo } else { t - delta };
            let g_mid = interp.at(t_mid)?;
            let k2 = f_rhs(&g_mid, &axpy(&f, -0.5 * delta, &k1)?, n, tau(t_mid))?;
            let k3 = f_rhs(&g_mid, &axpy(&f, -0.5 * delta, &k2)?, n, tau(t_mid))?;
            let g_next = if j + 1 == substeps { clone_geometry(&geoms[k - 1]) } else { interp.at(t_next)? };
            let k4 = f_rhs(&g_next, &axpy(&f, -delta, &k3)?, n, tau(t_next))?;
            let data =
                (0..f.data.len()).map(|p| f.data[p] - delta / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p])).collect();
            f = GridScalar::new(&f.grid, data)?;
            k1 = f_rhs(&g_next, &f, n, tau(t_next))?;
        }
        f_vals[k - 1] = f.clone();
        f_dots[k - 1] = k1;
    }

    Ok(CoupledTrajectory {
        flow: flow.clone(),
        path: traj.path,
        stars: traj.stars,
        tau0: cfg.tau0,
        r_star_mode: cfg.r_star,
        f: f_vals,
        f_dot: f_dots,
        f_shift,
        dt: traj.dt,
        f_substeps: substeps,
        min_eig: traj.min_eig,
        asymmetry: traj.asymmetry,
        eps_pd: cfg.eps_pd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Domain, MetricField, PhiField};

    #[test]
    fn flat_constant_closed_form() {
        let grid = Grid::new(&Domain::unit_torus(3), 8).unwrap();
        let g = MetricField::flat(3).to_grid(&grid, 0.0).unwrap();
        let flow = StarRicciFlow::new(&PhiField::zero(3), &grid).unwrap();
        let cfg = CoupledConfig { tau0: 1.0, horizon: 0.5, dt: 0.01, normalize: None, ..Default::default() };
        let ft = GridScalar::constant(&grid, 0.7);
        let traj = integrate_coupled_system(&flow, &g, &ft, &cfg).unwrap();
        assert_eq!(traj.times().len(), 51);
        for (k, &t) in traj.times().iter().enumerate() {
            assert_eq!(traj.tau(t), 1.0 - t);
            let exact = 0.7 - 1.5 * (traj.tau(t) / 0.5).ln();
            let err = traj.f[k].data.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "t = {t}");
        }
        let mid = traj.f_at(0.125).unwrap();
        assert!((mid.data[3] - (0.7 - 1.5 * (0.875f64 / 0.5).ln())).abs() < 1e-7);
    }

    #[test]
    fn normalization_and_conservation_on_flat_torus() {
        let grid = Grid::new(&Domain::unit_torus(3), 8).unwrap();
        let g = MetricField::flat(3).to_grid(&grid, 0.0).unwrap();
        let flow = StarRicciFlow::new(&PhiField::zero(3), &grid).unwrap();
        let cfg = CoupledConfig { horizon: 0.2, dt: 0.05, ..Default::default() };
        let ft = GridScalar::sample(&grid, |x| 0.4 * x[0].cos() + 0.2 * x[1].sin());
        let traj = integrate_coupled_system(&flow, &g, &ft, &cfg).unwrap();
        for v in traj.u_integrals(UConvention::Normalized).unwrap() {
            assert!((v - 1.0).abs() < 1e-8, "{v}");
        }
        let mut out = Vec::new();
        traj.write_csv(&mut out, UConvention::Normalized).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), traj.times().len() + 1);
        assert!(text.starts_with("t,tau,min_eig,u_integral\n"));
    }

    #[test]
    fn horizon_beyond_tau_rejected() {
        let grid = Grid::new(&Domain::unit_torus(2), 4).unwrap();
        let g = MetricField::flat(2).to_grid(&grid, 0.0).unwrap();
        let flow = StarRicciFlow::new(&PhiField::zero(2), &grid).unwrap();
        let cfg = CoupledConfig { tau0: 0.1, horizon: 0.1, ..Default::default() };
        let r = integrate_coupled_system(&flow, &g, &GridScalar::constant(&grid, 0.0), &cfg);
        assert!(matches!(r, Err(StarError::TauUnderflow { .. })));
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let xs = [0.0, 0.1, 0.25, 0.4];
        let w = lagrange_weights(&xs, 0.17);
        let v: f64 = xs.iter().zip(&w).map(|(x, wi)| wi * (x * x * x - x)).sum();
        assert!((v - (0.17f64.powi(3) - 0.17)).abs() < 1e-15);
    }
}
