//! Time evolution: the *-Ricci flow `∂_t g = −2 sym S*` on torus grids, the
//! coupled `(g, f, τ)` system, pullbacks by flows of vector fields, the
//! self-similar construction and the first variation of the connection.

mod coupled;
mod path;
mod pullback;
mod variation;

pub use coupled::{integrate_coupled_system, CoupledConfig, CoupledTrajectory, UConvention};
pub use path::{HermiteMetricPath, MetricPath, StaticMetricPath};
pub use pullback::{
    pullback_by_flow, pullback_jets, self_similar_metric, DiffeoFlowMap, SelfSimilarSample, SelfSimilarSpec,
    DEFAULT_FLOW_STEPS,
};
pub use variation::{connection_variation_check, star_flow_direction, ConnectionVariation};

use crate::error::{Result, StarError};
use crate::fields::{Grid, GridMetric, GridScalar, PhiField};
use crate::grid_geometry::{min_eigenvalue_on_grid, star_on_grid, StarGrid};
use crate::tensor::{cholesky, EPS_PD};

/// Default constant in the step guard `dt ≤ c·h²/max|S*|_g`.
pub const DEFAULT_GUARD: f64 = 0.2;

/// `(t, τ, g, f)` at one instant.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub tau: f64,
    pub g: GridMetric,
    pub f: Option<GridScalar>,
}

impl FlowState {
    pub fn new(t: f64, tau: f64, g: GridMetric) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(StarError::TauUnderflow { tau });
        }
        Ok(FlowState { t, tau, g, f: None })
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }
}

/// Diagnostics of one RK4 step.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Largest `|S* − S*ᵀ|/2` seen across the four stages.
    pub asymmetry: f64,
    pub s_norm_max: f64,
}

/// `∂_t g = −2 sym S*(g, φ)` with `φ` frozen at its node values.
#[derive(Clone, Debug)]
pub struct StarRicciFlow {
    grid: Grid,
    phi: Vec<Vec<f64>>,
    phi_is_zero: bool,
    pub eps_pd: f64,
}

impl StarRicciFlow {
    pub fn new(phi: &PhiField, grid: &Grid) -> Result<Self> {
        if phi.dim() != grid.dim() {
            return Err(StarError::ShapeMismatch("φ and grid dimensions differ".into()));
        }
        let phi_is_zero = phi.is_zero();
        let values = if phi_is_zero { Vec::new() } else { phi.node_values(grid)? };
        Ok(StarRicciFlow { grid: grid.clone(), phi: values, phi_is_zero, eps_pd: EPS_PD })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn star(&self, g: &GridMetric) -> Result<StarGrid> {
        star_on_grid(g, &self.phi, self.phi_is_zero, self.eps_pd)
    }

    /// `(−2 sym S*, star data)`.
    pub fn velocity(&self, g: &GridMetric) -> Result<(GridMetric, StarGrid)> {
        let star = self.star(g)?;
        let v = star.s_sym.axpby(-2.0, &star.s_sym, 0.0);
        Ok((v, star))
    }

    /// Largest step the guard `c·h²/max|S*|_g` allows at `g` (infinite when `S* = 0`).
    pub fn guard_dt(&self, g: &GridMetric, c: f64) -> Result<f64> {
        let star = self.star(g)?;
        Ok(guard_from(&star, &self.grid, c))
    }

    fn check_finite(&self, g: &GridMetric, t: f64) -> Result<()> {
        if g.comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StarError::StepRejected { t });
        }
        Ok(())
    }

    /// One classical RK4 step; the result is re-validated for positivity.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<(FlowState, StepReport)> {
        if !(dt > 0.0) {
            return Err(StarError::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let g0 = &state.g;
        let (k1, s1) = self.velocity(g0)?;
        let g1 = g0.axpby(1.0, &k1, 0.5 * dt);
        self.check_finite(&g1, state.t)?;
        let (k2, s2) = self.velocity(&g1)?;
        let g2 = g0.axpby(1.0, &k2, 0.5 * dt);
        self.check_finite(&g2, state.t)?;
        let (k3, s3) = self.velocity(&g2)?;
        let g3 = g0.axpby(1.0, &k3, dt);
        self.check_finite(&g3, state.t)?;
        let (k4, s4) = self.velocity(&g3)?;
        let n = g0.dim();
        let comps = (0..g0.comps.len())
            .map(|c| {
                (0..g0.grid.len())
                    .map(|p| {
                        g0.comps[c][p]
                            + dt / 6.0 * (k1.comps[c][p] + 2.0 * k2.comps[c][p] + 2.0 * k3.comps[c][p] + k4.comps[c][p])
                    })
                    .collect()
            })
            .collect();
        let g_new = GridMetric::new(&g0.grid, comps)?;
        self.check_finite(&g_new, state.t + dt)?;
        for p in 0..g_new.grid.len() {
            let m = g_new.at(p);
            if cholesky(n, &m, self.eps_pd).is_none() {
                return Err(StarError::PositivityLost {
                    t: state.t + dt,
                    min_eigenvalue: crate::tensor::min_eigenvalue(n, &m),
                });
            }
        }
        let report = StepReport {
            asymmetry: [&s1, &s2, &s3, &s4].iter().map(|s| s.s_asymmetry).fold(0.0, f64::max),
            s_norm_max: s1.s_norm_max,
        };
        let next = FlowState { t: state.t + dt, tau: state.tau - dt, g: g_new, f: state.f.clone() };
        Ok((next, report))
    }
}

fn guard_from(star: &StarGrid, grid: &Grid, c: f64) -> f64 {
    if star.s_norm_max > 0.0 {
        c * grid.min_spacing().powi(2) / star.s_norm_max
    } else {
        f64::INFINITY
    }
}

/// One RK4 step of the *-Ricci flow with `φ` held fixed.
pub fn flow_step_star_ricci(state: &FlowState, phi: &PhiField, dt: f64) -> Result<FlowState> {
    let flow = StarRicciFlow::new(phi, &state.g.grid)?;
    Ok(flow.step(state, dt)?.0)
}

/// Metric trajectory with its velocity at every step.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub path: HermiteMetricPath,
    pub dt: f64,
    pub min_eig: Vec<f64>,
    /// Per-step maximum asymmetry of `S*` before symmetrization.
    pub asymmetry: Vec<f64>,
    /// *-curvature at every snapshot.
    pub stars: Vec<StarGrid>,
}

/// Fixed-step flow over `[t0, t0 + horizon]`; the step is the requested `dt`
/// reduced, if needed, to satisfy the guard at the initial metric, then
/// shrunk so an integer number of steps lands exactly on the horizon.
pub fn integrate_flow(
    flow: &StarRicciFlow,
    g0: &GridMetric,
    t0: f64,
    horizon: f64,
    dt_requested: f64,
    guard_c: f64,
) -> Result<FlowTrajectory> {
    if !(horizon > 0.0) || !(dt_requested > 0.0) {
        return Err(StarError::InvalidArgument("horizon and dt must be positive".into()));
    }
    let (v0, star0) = flow.velocity(g0)?;
    let dt_max = dt_requested.min(guard_from(&star0, flow.grid(), guard_c));
    let steps = (horizon / dt_max - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let mut state = FlowState { t: t0, tau: f64::INFINITY, g: g0.clone(), f: None };
    let mut times = vec![t0];
    let mut metrics = vec![g0.clone()];
    let mut velocities = vec![v0];
    let mut min_eig = vec![min_eigenvalue_on_grid(g0)];
    let mut asymmetry = vec![star0.s_asymmetry];
    let mut stars = vec![star0];
    for k in 0..steps {
        let (next, report) = flow.step(&state, dt)?;
        state = next;
        state.t = t0 + (k + 1) as f64 * dt;
        let (v, star) = flow.velocity(&state.g)?;
        times.push(state.t);
        metrics.push(state.g.clone());
        velocities.push(v);
        min_eig.push(min_eigenvalue_on_grid(&state.g));
        asymmetry.push(report.asymmetry.max(star.s_asymmetry));
        stars.push(star);
    }
    Ok(FlowTrajectory { path: HermiteMetricPath::new(times, metrics, velocities)?, dt, min_eig, asymmetry, stars })
}
