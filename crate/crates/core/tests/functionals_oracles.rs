use std::f64::consts::{PI, TAU};

use starlab_core::fields::{Grid, GridScalar, MetricField, ScalarField};
use starlab_core::flow::{integrate_flow, StarRicciFlow, UConvention, DEFAULT_GUARD};
use starlab_core::functionals::{df_dt_check, f_functional, u_v_fields, EntropyContext, FormulaMode, F_INTEGRAND_CONSTANT};
use starlab_core::grid_geometry::{scalar_calculus_on_grid, star_on_grid};
use starlab_core::oracle::adaptive_quadrature;
use starlab_core::presets::{build, PresetName, PresetParams};
use starlab_core::tensor::EPS_PD;
use starlab_core::Expr;

#[test]
fn f_functional_cosine_quadrature_oracle() {
    let s = build(PresetName::Flat3, &PresetParams::default()).unwrap();
    let grid = Grid::new(&s.domain, 32).unwrap();
    let g = s.metric.to_grid(&grid, 0.0).unwrap();
    for a in [1.0, 0.5, 1.7] {
        let f = GridScalar::sample(&grid, |x| a * x[0].cos());
        let value = f_functional(&g, &f, F_INTEGRAND_CONSTANT).unwrap();
        let oracle = TAU * TAU * adaptive_quadrature(|x| (-1.0 + a * a * x.sin().powi(2)) * (-a * x.cos()).exp(), 0.0, TAU, 1e-14);
        assert!((value - oracle).abs() < 1e-8 * oracle.abs(), "a={a}: {value} vs {oracle}");
    }
}

#[test]
fn warped_volume_matches_bessel_integral() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let grid = Grid::new(&s.domain, 32).unwrap();
    let g = s.metric.to_grid(&grid, 0.0).unwrap();
    let vol = starlab_core::fields::integrate_over_torus(&vec![1.0; grid.len()], &g).unwrap();
    let oracle = TAU * TAU * adaptive_quadrature(|x| x.sin().exp(), 0.0, TAU, 1e-14);
    assert!((vol - oracle).abs() < 1e-12 * oracle);
}

#[test]
fn df_dt_on_warped_flow() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let grid = Grid::new(&s.domain, 16).unwrap();
    let g0 = s.metric.to_grid(&grid, 0.0).unwrap();
    let flow = StarRicciFlow::new(&s.phi, &grid).unwrap();
    let traj = integrate_flow(&flow, &g0, 0.0, 0.05, 0.01, DEFAULT_GUARD).unwrap();
    let times = traj.path.times();
    let t0 = 0.5 * (times[1] + times[2]);
    let f = ScalarField::Analytic(Expr::x(0).cos() * 0.8 + Expr::t() * Expr::x(1).sin());
    let r = df_dt_check(&traj.path, &f, t0, F_INTEGRAND_CONSTANT, None, 3).unwrap();
    let rel = (r.value(FormulaMode::Chain) - r.fd_value).abs() / r.fd_value.abs();
    assert!(rel < 1e-4, "{r:?}");
    assert!(r.paper.is_finite());
}

#[test]
fn v_field_matches_recomposition() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let grid = Grid::new(&s.domain, 32).unwrap();
    let g = s.metric.to_grid(&grid, 0.0).unwrap();
    let phi = s.phi.node_values(&grid).unwrap();
    let star = star_on_grid(&g, &phi, false, EPS_PD).unwrap();
    let f_expr = Expr::x(0).cos() * 0.4 + Expr::x(1).sin() * 0.3;
    let f = ScalarField::Analytic(f_expr);
    let tau = 0.8;
    let ctx = EntropyContext::new(tau, UConvention::Normalized, 3).unwrap();
    let uv = u_v_fields(&g, &f.to_grid(&grid, 0.0).unwrap(), &star, &ctx).unwrap();
    let nodes = s.metric.node_derivatives(&grid, 0.0, 1).unwrap();
    let fd = f.node_derivatives(&grid, 0.0, 2).unwrap();
    let calc = scalar_calculus_on_grid(&nodes, &fd, EPS_PD).unwrap();
    let pre = (4.0 * PI * tau).powf(-1.5);
    for p in 0..grid.len() {
        let fv = fd.values()[p];
        let u = pre * (-fv).exp();
        let v = (tau * (2.0 * calc.laplacian[p] - calc.grad_sq[p] + star.r_star[p]) + fv - 3.0) * u;
        assert!((uv.v.data[p] - v).abs() < 1e-12, "node {p}");
    }
    let flat = MetricField::flat(3).to_grid(&grid, 0.0).unwrap();
    assert!(f_functional(&flat, &GridScalar::constant(&grid, 0.0), F_INTEGRAND_CONSTANT).unwrap() < 0.0);
}
