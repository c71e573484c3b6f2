//! Verification suites assembled from the core evaluators.

use std::cell::OnceCell;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use starlab_core::curvature::{bochner_residual, curvature_jet, star_curvature, MetricJet};
use starlab_core::fields::{richardson_vector, Domain, Grid, GridScalar, MetricField, ScalarField, VectorField};
use starlab_core::flow::{
    connection_variation_check, integrate_coupled_system, integrate_flow, self_similar_metric, star_flow_direction,
    CoupledConfig, CoupledTrajectory, SelfSimilarSpec, StarRicciFlow, UConvention, DEFAULT_GUARD,
};
use starlab_core::functionals::{
    df_dt_check, f_functional, soliton_residual, thm31_check, FormulaMode, SolitonData, SolitonVariant, Thm31Report,
    F_INTEGRAND_CONSTANT,
};
use starlab_core::identities::{identity_residuals, IdentityResiduals};
use starlab_core::oracle::adaptive_quadrature;
use starlab_core::presets::{self, random_band_limited, random_smooth_metric, PresetName, PresetParams};
use starlab_core::{Expr, StarError, TrigKind, TrigPoly};

use crate::config::{ResolvedScenario, ScenarioConfig};
use crate::report::{Environment, Row, VerificationReport, BUILD_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identities,
    Prop11,
    Prop12,
    Thm21,
    Thm31,
    Bochner,
    Conservation,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] =
        [Suite::Identities, Suite::Prop11, Suite::Prop12, Suite::Thm21, Suite::Thm31, Suite::Bochner, Suite::Conservation];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Prop11 => "prop11",
            Suite::Prop12 => "prop12",
            Suite::Thm21 => "thm21",
            Suite::Thm31 => "thm31",
            Suite::Bochner => "bochner",
            Suite::Conservation => "conservation",
            Suite::All => "all",
        }
    }
}

type Res<T> = std::result::Result<T, StarError>;

/// Shared state for one invocation; the coupled trajectory and the
/// transport report are computed at most once.
pub struct SuiteContext<'a> {
    pub cfg: &'a ScenarioConfig,
    pub sc: ResolvedScenario,
    grid: Option<Grid>,
    coupled: OnceCell<Res<CoupledTrajectory>>,
    transport: OnceCell<Res<Thm31Report>>,
}

impl<'a> SuiteContext<'a> {
    pub fn new(cfg: &'a ScenarioConfig, sc: ResolvedScenario) -> Self {
        let grid = sc.grid(cfg.domain.n);
        SuiteContext { cfg, sc, grid, coupled: OnceCell::new(), transport: OnceCell::new() }
    }

    fn id(&self) -> &str {
        &self.sc.id
    }

    fn grid(&self) -> Res<&Grid> {
        self.grid.as_ref().ok_or(StarError::NotTorus)
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
    }

    fn f_expr(&self) -> Expr {
        self.sc.f.to_expr()
    }

    fn coupled(&self) -> Res<&CoupledTrajectory> {
        self.coupled
            .get_or_init(|| {
                let grid = self.grid()?;
                let g0 = self.sc.metric.to_grid(grid, 0.0)?;
                let flow = StarRicciFlow::new(&self.sc.phi, grid)?;
                let t_final = self.cfg.flow.t_final;
                let f = self.f_expr();
                let f_final = GridScalar::sample(grid, |x| f.value(x, t_final));
                let cc = CoupledConfig {
                    tau0: self.cfg.flow.tau0,
                    horizon: t_final,
                    dt: self.cfg.flow.dt,
                    normalize: Some(self.cfg.u_convention),
                    ..CoupledConfig::default()
                };
                integrate_coupled_system(&flow, &g0, &f_final, &cc)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn transport(&self) -> Res<&Thm31Report> {
        self.transport
            .get_or_init(|| {
                let traj = self.coupled()?;
                thm31_check(traj, mid_interval(traj.times()), self.cfg.u_convention, None, self.cfg.fd.levels)
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn mid_interval(times: &[f64]) -> f64 {
    let k = (times.len() - 1) / 2;
    0.5 * (times[k] + times[k + 1])
}

fn random_point(rng: &mut ChaCha8Rng, domain: &Domain) -> Vec<f64> {
    match domain {
        Domain::Torus { radii } => radii.iter().map(|r| rng.gen_range(0.0..TAU * r)).collect(),
        Domain::AnalyticBox { lo, hi } => lo
            .iter()
            .zip(hi)
            .map(|(a, b)| {
                let (c, w) = (0.5 * (a + b), 0.45 * (b - a));
                rng.gen_range(c - w..c + w)
            })
            .collect(),
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Runs `body`; a runtime error becomes one failed row.
fn guarded(rows: &mut Vec<Row>, check_id: &str, scenario: &str, tol: f64, body: impl FnOnce() -> Res<Vec<Row>>) {
    match body() {
        Err(StarError::NotTorus) => rows.push(Row::skipped(check_id, scenario, tol, "requires a periodic grid")),
        Ok(r) => rows.extend(r),
        Err(e) => rows.push(Row::failed(check_id, scenario, tol, e.to_string())),
    }
}

fn identity_rows(prefix: &str, scenario: &str, r: &IdentityResiduals, tol: f64) -> Vec<Row> {
    let s = r.scale.max(1.0);
    [
        ("antisym-first", r.antisym_first / s),
        ("antisym-last", r.antisym_last / s),
        ("pair-symmetry", r.pair_symmetry / s),
        ("first-bianchi", r.first_bianchi / s),
        ("christoffel-symmetry", r.christoffel_symmetry),
        ("ricci-trace", r.ricci_trace / r.ricci_scale.max(1.0)),
        ("metric-parallel", r.metric_parallel),
    ]
    .into_iter()
    .map(|(name, v)| Row::check(&format!("{prefix}.{name}"), scenario, v, 0.0, tol))
    .collect()
}

pub fn identities(ctx: &SuiteContext) -> Vec<Row> {
    let (cfg, sc, id) = (ctx.cfg, &ctx.sc, ctx.id());
    let tol = &cfg.tolerances;
    let mut rows = Vec::new();
    guarded(&mut rows, "identities.analytic", id, tol.identities_analytic, || {
        let mut rng = ctx.rng(1);
        let mut worst = IdentityResiduals::default();
        for _ in 0..20 {
            let x = random_point(&mut rng, &sc.domain);
            let geom = curvature_jet(&sc.metric.metric_jet(&sc.domain, &x, 0.0, 2)?)?;
            worst = worst.merge(&identity_residuals(&geom));
        }
        Ok(identity_rows("identities.analytic", id, &worst, tol.identities_analytic))
    });
    if sc.domain.is_torus() {
        guarded(&mut rows, "identities.grid", id, tol.identities_grid, || {
            let grid = ctx.grid()?;
            let g = MetricField::Grid(sc.metric.to_grid(grid, 0.0)?);
            let nodes = g.node_derivatives(grid, 0.0, 2)?;
            let stride = (grid.len() / 337).max(1);
            let mut worst = IdentityResiduals::default();
            for p in (0..grid.len()).step_by(stride) {
                worst = worst.merge(&identity_residuals(&curvature_jet(&nodes.metric_jet(p))?));
            }
            Ok(identity_rows("identities.grid", id, &worst, tol.identities_grid))
        });
    }
    if sc.metric_preset == PresetName::Flat3 {
        guarded(&mut rows, "flow.flat-stationarity", id, tol.stationarity, || {
            let grid = ctx.grid()?;
            let g0 = sc.metric.to_grid(grid, 0.0)?;
            let flow = StarRicciFlow::new(&sc.phi, grid)?;
            let traj = integrate_flow(&flow, &g0, 0.0, 100.0 * cfg.flow.dt, cfg.flow.dt, DEFAULT_GUARD)?;
            let drift = traj.path.snapshots().iter().map(|g| g.max_diff(&g0)).fold(0.0, f64::max);
            let steps = traj.path.times().len() - 1;
            Ok(vec![Row::check("flow.flat-stationarity", id, drift, 0.0, tol.stationarity).with_note(format!("{steps} RK4 steps"))])
        });
    }
    rows
}

fn steady_rows(ctx: &SuiteContext) -> Res<Vec<Row>> {
    let tol = ctx.cfg.tolerances.prop11_steady;
    let flat = presets::build(PresetName::Flat3, &PresetParams::default())?;
    let y = VectorField::Analytic(vec![Expr::c(0.4), Expr::c(-0.2), Expr::c(0.1)]);
    let spec = self_similar_metric(&flat.domain, &flat.metric, &y, 0.0);
    let mut rng = ctx.rng(2);
    let (mut dt_norm, mut star_norm) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let x = random_point(&mut rng, &flat.domain);
        let t = rng.gen_range(0.1..0.9);
        let d = richardson_vector(|s| Ok(spec.sample(&x, s)?.metric), t, ctx.cfg.fd.h0, ctx.cfg.fd.levels)?;
        dt_norm = dt_norm.max(max_abs(&d.value));
        let geom = curvature_jet(&MetricJet::from_jets(3, spec.metric_jets(&x, t, 2)?)?)?;
        let star = star_curvature(&geom, &ctx.sc.phi.eval_jets(&flat.domain, &x, 0)?)?;
        star_norm = star_norm.max(2.0 * max_abs(&star.sym_s_star(3)));
    }
    Ok(vec![
        Row::check("prop11.steady.dt", "flat3+translation", dt_norm, 0.0, tol),
        Row::check("prop11.steady.star", "flat3+translation", star_norm, 0.0, tol),
    ])
}

fn general_rows(ctx: &SuiteContext) -> Res<Vec<Row>> {
    let sc = &ctx.sc;
    let tol = ctx.cfg.tolerances.prop11_general;
    let metric = match &sc.metric {
        MetricField::Analytic { dim, comps } => MetricField::Analytic {
            dim: *dim,
            comps: comps.iter().map(|e| e.clone() * (Expr::c(1.0) + Expr::t() * 0.3)).collect(),
        },
        other => other.clone(),
    };
    let vector = if sc.domain.is_torus() {
        VectorField::Analytic(vec![Expr::x(1).sin(), Expr::x(2).cos() * 0.5, Expr::c(0.3)])
    } else {
        presets::radial_field(3, 0.5)
    };
    let spec = SelfSimilarSpec {
        domain: sc.domain.clone(),
        metric,
        vector,
        vector_scale: Expr::c(1.0) + Expr::t() * 0.5,
        sigma: Expr::c(1.0) + (Expr::t() * 2.0).sin() * 0.3,
        steps: 256,
    };
    let mut rng = ctx.rng(3);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x = random_point(&mut rng, &sc.domain);
        let t = 0.35;
        let d = richardson_vector(|s| Ok(spec.sample(&x, s)?.metric), t, ctx.cfg.fd.h0, ctx.cfg.fd.levels)?;
        let rhs = spec.sample(&x, t)?.rhs_eq15;
        let gap = d.value.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(gap / max_abs(&rhs).max(1e-300));
    }
    Ok(vec![Row::check("prop11.general", ctx.id(), worst, 0.0, tol).with_note("max|FD − rhs|/max|rhs|")])
}

fn scaling_rows(ctx: &SuiteContext) -> Res<Vec<Row>> {
    let tol = ctx.cfg.tolerances.prop11_scaling;
    let lambda = if ctx.sc.lambda != 0.0 { ctx.sc.lambda } else { 0.25 };
    let boxed = presets::build(PresetName::GaussianBox, &PresetParams::default())?;
    let domain = if ctx.sc.domain.is_torus() { boxed.domain } else { ctx.sc.domain.clone() };
    let spec = self_similar_metric(&domain, &boxed.metric, &VectorField::zero(3), lambda);
    let mut rng = ctx.rng(4);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x = random_point(&mut rng, &domain);
        let d = richardson_vector(|s| Ok(spec.sample(&x, s)?.metric), 0.5, ctx.cfg.fd.h0, ctx.cfg.fd.levels)?;
        for (i, v) in d.value.iter().enumerate() {
            let expect = if i % 4 == 0 { -2.0 * lambda } else { 0.0 };
            worst = worst.max((v - expect).abs());
        }
    }
    Ok(vec![Row::check("prop11.scaling", "box+scaling", worst, 0.0, tol).with_note(format!("λ = {lambda}"))])
}

fn soliton_rows(ctx: &SuiteContext) -> Res<Vec<Row>> {
    let sc = &ctx.sc;
    let tol = &ctx.cfg.tolerances;
    let data = SolitonData { v: sc.v.clone(), lambda: sc.lambda, variant: SolitonVariant::Star };
    let mut rng = ctx.rng(5);
    let pts: Vec<Vec<f64>> = (0..5).map(|_| random_point(&mut rng, &sc.domain)).collect();
    let (_, sup) = soliton_residual(&sc.domain, &sc.metric, &sc.phi, &data, &pts, 0.0)?;
    let mut rows = vec![Row::check("prop11.soliton", ctx.id(), sup, 0.0, tol.prop11_scaling)];
    let spec = self_similar_metric(&sc.domain, &sc.metric, &sc.v, -sc.lambda);
    let mut worst = 0.0f64;
    for x in &pts {
        let t = 0.4;
        let d = richardson_vector(|s| Ok(spec.sample(x, s)?.metric), t, ctx.cfg.fd.h0, ctx.cfg.fd.levels)?;
        let geom = curvature_jet(&MetricJet::from_jets(3, spec.metric_jets(x, t, 2)?)?)?;
        let star = star_curvature(&geom, &sc.phi.eval_jets(&sc.domain, x, 0)?)?;
        let rhs: Vec<f64> = star.sym_s_star(3).iter().map(|s| -2.0 * s).collect();
        worst = worst.max(d.value.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    rows.push(Row::check("prop11.soliton-flow", ctx.id(), worst, 0.0, tol.prop11_general));
    Ok(rows)
}

pub fn prop11(ctx: &SuiteContext) -> Vec<Row> {
    let id = ctx.id().to_string();
    let tol = &ctx.cfg.tolerances;
    let mut rows = Vec::new();
    guarded(&mut rows, "prop11.steady", &id, tol.prop11_steady, || steady_rows(ctx));
    guarded(&mut rows, "prop11.general", &id, tol.prop11_general, || general_rows(ctx));
    guarded(&mut rows, "prop11.scaling", &id, tol.prop11_scaling, || scaling_rows(ctx));
    let has_soliton = match &ctx.sc.v {
        VectorField::Analytic(c) => !c.iter().all(Expr::is_zero),
        VectorField::Grid(_) => true,
    };
    if has_soliton {
        guarded(&mut rows, "prop11.soliton", &id, tol.prop11_scaling, || soliton_rows(ctx));
    }
    rows
}

pub fn prop12(ctx: &SuiteContext) -> Vec<Row> {
    let (sc, id) = (&ctx.sc, ctx.id());
    let tol = ctx.cfg.tolerances.prop12;
    let mut rows = Vec::new();
    guarded(&mut rows, "prop12.connection-variation", id, tol, || {
        let mut rng = ctx.rng(6);
        let mut standard: Option<(f64, f64, f64)> = None;
        let mut paper: Option<(f64, f64, f64)> = None;
        for _ in 0..20 {
            let p = random_point(&mut rng, &sc.domain);
            let (x, y, z) = (unit_vector(&mut rng, 3), unit_vector(&mut rng, 3), unit_vector(&mut rng, 3));
            let g = sc.metric.eval_jets(&sc.domain, &p, 0.0, 3)?;
            let h = star_flow_direction(&g, &sc.phi.eval_jets(&sc.domain, &p, 1)?)?;
            let r = connection_variation_check(&g, &h, &x, &y, &z)?;
            let scale = r.standard_value.abs().max(1e-10);
            let e_std = (r.fd_value - r.standard_value).abs() / scale;
            let e_pap = (r.fd_value - r.paper_rhs).abs() / scale;
            if standard.map_or(true, |w| e_std > w.2) {
                standard = Some((r.fd_value, r.standard_value, e_std));
            }
            if paper.map_or(true, |w| e_pap > w.2) {
                paper = Some((r.fd_value, r.paper_rhs, e_pap));
            }
        }
        let (s, p) = (standard.unwrap_or_default(), paper.unwrap_or_default());
        Ok(vec![
            Row::check("prop12.connection-variation", id, s.0, s.1, tol),
            Row::diagnostic("prop12.paper-rhs", id, p.0, p.1, tol),
        ])
    });
    rows
}

pub fn thm21(ctx: &SuiteContext) -> Vec<Row> {
    let (cfg, sc, id) = (ctx.cfg, &ctx.sc, ctx.id());
    let tol = &cfg.tolerances;
    let mut rows = Vec::new();
    if sc.metric_preset == PresetName::Flat3 {
        guarded(&mut rows, "functional.f-closed-form", id, tol.f_closed_form, || {
            let grid = ctx.grid()?;
            let g = sc.metric.to_grid(grid, 0.0)?;
            let f = GridScalar::sample(grid, |x| x[0].cos());
            let value = f_functional(&g, &f, F_INTEGRAND_CONSTANT)?;
            let oracle = TAU * TAU * adaptive_quadrature(|x| (-1.0 + x.sin().powi(2)) * (-x.cos()).exp(), 0.0, TAU, 1e-14);
            Ok(vec![Row::check("functional.f-closed-form", id, value, oracle, tol.f_closed_form).with_note("f = cos x")])
        });
    }
    guarded(&mut rows, "thm21.chain-vs-fd", id, tol.thm21, || {
        let traj = ctx.coupled()?;
        let t0 = mid_interval(traj.times());
        let f = ScalarField::Analytic(ctx.f_expr());
        let r = df_dt_check(&traj.path, &f, t0, F_INTEGRAND_CONSTANT, cfg.fd.h0, cfg.fd.levels)?;
        let note = format!("t0 = {t0}, fd error estimate {:e}", r.fd_error);
        let mut out = Vec::new();
        if cfg.formula_mode.chain() {
            out.push(Row::check("thm21.chain-vs-fd", id, r.value(FormulaMode::Chain), r.fd_value, tol.thm21).with_note(note.clone()));
        }
        if cfg.formula_mode.paper() {
            out.push(Row::diagnostic("thm21.paper-vs-fd", id, r.value(FormulaMode::Paper), r.fd_value, tol.thm21).with_note(note));
        }
        Ok(out)
    });
    rows
}

fn flat_constant_rows(ctx: &SuiteContext) -> Res<Vec<Row>> {
    let tol = ctx.cfg.tolerances.thm31;
    let flat = presets::build(PresetName::Flat3, &PresetParams::default())?;
    let grid = Grid::new(&flat.domain, 8)?;
    let g0 = flat.metric.to_grid(&grid, 0.0)?;
    let flow = StarRicciFlow::new(&flat.phi, &grid)?;
    let cc = CoupledConfig { tau0: 1.0, horizon: 0.2, dt: 0.005, ..CoupledConfig::default() };
    let traj = integrate_coupled_system(&flow, &g0, &GridScalar::constant(&grid, 0.4), &cc)?;
    let t0 = mid_interval(traj.times());
    let r = thm31_check(&traj, t0, UConvention::Normalized, None, ctx.cfg.fd.levels)?;
    let closed = 1.5 / traj.tau(t0);
    let scenario = "flat3+constant";
    Ok(vec![
        Row::check("thm31.flat-constant.transport", scenario, r.domega_dt_fd, r.minus_int_boxstar_v_direct, tol),
        Row::check("thm31.flat-constant.closed-form", scenario, r.domega_dt_fd, closed, tol).with_note("n/2τ"),
    ])
}

pub fn thm31(ctx: &SuiteContext) -> Vec<Row> {
    let id = ctx.id();
    let tol = ctx.cfg.tolerances.thm31;
    let mut rows = Vec::new();
    guarded(&mut rows, "thm31.flat-constant", id, tol, || flat_constant_rows(ctx));
    guarded(&mut rows, "thm31.transport", id, tol, || {
        let r = ctx.transport()?;
        let note = format!("t0 = {}, τ = {}, ω = {}, fd error estimate {:e}", r.t0, r.tau, r.omega, r.domega_dt_fd_error);
        Ok(vec![
            Row::check("thm31.transport", id, r.domega_dt_fd, r.minus_int_boxstar_v_direct, tol).with_note(note),
            Row::diagnostic("thm31.eq313", id, r.minus_int_eq313, r.domega_dt_fd, tol),
        ])
    });
    rows
}

pub fn bochner(ctx: &SuiteContext) -> Vec<Row> {
    let (sc, id) = (&ctx.sc, ctx.id());
    let tol = ctx.cfg.tolerances.bochner;
    let mut rows = Vec::new();
    guarded(&mut rows, "bochner.random", id, tol, || {
        let mut rng = ctx.rng(7);
        let torus = Domain::unit_torus(3);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let g = random_smooth_metric(rng.gen(), 3);
            let f = random_band_limited(rng.gen(), 3, 2, 1.0).to_expr();
            let x = random_point(&mut rng, &torus);
            worst = worst.max(bochner_residual(3, g.eval_jets(&torus, &x, 0.0, 3)?, &f.spatial_jet(&x, 0.0, 4))?.abs());
        }
        Ok(vec![Row::check("bochner.random", "random-50", worst, 0.0, tol)])
    });
    guarded(&mut rows, "bochner.scenario", id, tol, || {
        let f = if sc.f.terms.is_empty() {
            TrigPoly::default().term(1.0, TrigKind::Sin, &[1, 0, 0]).term(1.0, TrigKind::Cos, &[0, 1, 0]).to_expr()
        } else {
            sc.f.to_expr()
        };
        let mut rng = ctx.rng(8);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let x = random_point(&mut rng, &sc.domain);
            worst = worst.max(bochner_residual(3, sc.metric.eval_jets(&sc.domain, &x, 0.0, 3)?, &f.spatial_jet(&x, 0.0, 4))?.abs());
        }
        Ok(vec![Row::check("bochner.scenario", id, worst, 0.0, tol)])
    });
    rows
}

pub fn conservation(ctx: &SuiteContext) -> Vec<Row> {
    let id = ctx.id();
    let tol = ctx.cfg.tolerances.conservation;
    let mut rows = Vec::new();
    guarded(&mut rows, "conservation.u-integral", id, tol, || {
        let traj = ctx.coupled()?;
        let integrals = traj.u_integrals(ctx.cfg.u_convention)?;
        let worst = integrals.iter().copied().fold(1.0f64, |w, v| if (v - 1.0).abs() > (w - 1.0).abs() { v } else { w });
        let note = format!("{} snapshots, {:?} convention", integrals.len(), ctx.cfg.u_convention);
        Ok(vec![Row::check("conservation.u-integral", id, worst, 1.0, tol).with_note(note)])
    });
    guarded(&mut rows, "conservation.boxstar", id, tol, || {
        let r = ctx.transport()?;
        Ok(vec![
            Row::check("conservation.boxstar-normalized", id, r.boxstar_u_normalized, 0.0, tol),
            Row::check("conservation.literal-shifted", id, r.boxstar_u_literal_shifted, 0.0, tol).with_note("max|◇*u − (n/2τ)u|, u = e^{−f}"),
            Row::diagnostic("conservation.literal-violation", id, r.boxstar_u_literal, 0.0, tol).with_note("max|◇*u|, u = e^{−f}"),
        ])
    });
    rows
}

pub fn run_suite(cfg: &ScenarioConfig, suite: Suite) -> Result<VerificationReport, crate::config::ConfigError> {
    cfg.validate()?;
    let ctx = SuiteContext::new(cfg, cfg.resolve()?);
    let mut rows = Vec::new();
    let selected: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
    for s in selected {
        rows.extend(match s {
            Suite::Identities => identities(&ctx),
            Suite::Prop11 => prop11(&ctx),
            Suite::Prop12 => prop12(&ctx),
            Suite::Thm21 => thm21(&ctx),
            Suite::Thm31 => thm31(&ctx),
            Suite::Bochner => bochner(&ctx),
            Suite::Conservation => conservation(&ctx),
            Suite::All => Vec::new(),
        });
    }
    let dt = ctx.coupled.get().and_then(|r| r.as_ref().ok()).map_or(cfg.flow.dt, |t| t.dt);
    Ok(VerificationReport {
        suite: suite.as_str().into(),
        environment: Environment {
            grid_n: cfg.domain.n,
            dt,
            h0: cfg.fd.h0,
            levels: cfg.fd.levels,
            seed: cfg.seed,
            build_id: BUILD_ID.into(),
        },
        rows,
    })
}
