use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starlab_core::curvature::{bochner_residual, covariant_derivative_jets, curvature_jet, scalar_calculus_jet, star_curvature};
use starlab_core::fields::{richardson_vector, Domain, Grid, MetricField};
use starlab_core::identities::{identity_residuals, IdentityResiduals};
use starlab_core::presets::{build, random_band_limited, random_smooth_metric, rotation_phi, PresetName, PresetParams};
use starlab_core::tensor::Slot;
use starlab_core::{Expr, Scalar};

fn random_points(seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..3).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect()).collect()
}

fn assert_identities(r: &IdentityResiduals, tol: f64) {
    let s = r.scale.max(1.0);
    assert!(r.antisym_first <= tol * s, "{r:?}");
    assert!(r.antisym_last <= tol * s, "{r:?}");
    assert!(r.pair_symmetry <= tol * s, "{r:?}");
    assert!(r.first_bianchi <= tol * s, "{r:?}");
    assert!(r.ricci_trace <= 1e-10 * r.ricci_scale.max(1.0), "{r:?}");
    assert!(r.metric_parallel <= 1e-10, "{r:?}");
}

#[test]
fn analytic_presets_satisfy_identities() {
    for name in [PresetName::Flat3, PresetName::Warped3, PresetName::RotPhi] {
        let s = build(name, &PresetParams::default()).unwrap();
        for x in random_points(1, 25) {
            let geom = curvature_jet(&s.metric.metric_jet(&s.domain, &x, 0.0, 2).unwrap()).unwrap();
            assert_identities(&identity_residuals(&geom), 1e-9);
        }
    }
    for seed in 0..5 {
        let g = random_smooth_metric(seed, 3);
        for x in random_points(seed + 10, 5) {
            let geom = curvature_jet(&g.metric_jet(&Domain::unit_torus(3), &x, 0.0, 2).unwrap()).unwrap();
            assert_identities(&identity_residuals(&geom), 1e-9);
        }
    }
}

#[test]
fn grid_backend_satisfies_identities() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let grid = Grid::new(&s.domain, 32).unwrap();
    let nodes = MetricField::Grid(s.metric.to_grid(&grid, 0.0).unwrap()).node_derivatives(&grid, 0.0, 2).unwrap();
    let mut worst = IdentityResiduals::default();
    for p in (0..grid.len()).step_by(97) {
        let geom = curvature_jet(&nodes.metric_jet(p)).unwrap();
        worst = worst.merge(&identity_residuals(&geom));
    }
    assert!(worst.scale > 0.5);
    assert_identities(&worst, 1e-7);
}

#[test]
fn scaling_law() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let c = 3.0;
    let scaled = MetricField::diagonal(vec![Expr::c(c), Expr::c(c), (Expr::x(0).sin() * 2.0).exp() * c]);
    let x = [0.7, 0.1, 0.2];
    let a = curvature_jet(&s.metric.metric_jet(&s.domain, &x, 0.0, 2).unwrap()).unwrap();
    let b = curvature_jet(&scaled.metric_jet(&s.domain, &x, 0.0, 2).unwrap()).unwrap();
    for (ga, gb) in a.conn.gamma.iter().zip(&b.conn.gamma) {
        assert!((ga.value() - gb.value()).abs() < 1e-14);
    }
    for (ra, rb) in a.riemann_lower.iter().zip(&b.riemann_lower) {
        assert!((c * ra.value() - rb.value()).abs() < 1e-12);
    }
    assert!((a.scalar.value() / c - b.scalar.value()).abs() < 1e-13);
}

/// `S*(∂_a,∂_b) = ½ tr(Z ↦ R(∂_a, φ∂_b)φZ)` assembled as an explicit matrix
/// and traced with nalgebra.
#[test]
fn trace_form_matches_matrix_trace() {
    let s = build(PresetName::RotPhi, &PresetParams::default()).unwrap();
    let phi_field = rotation_phi(std::f64::consts::FRAC_PI_2);
    for x in random_points(3, 6) {
        let geom = curvature_jet(&s.metric.metric_jet(&s.domain, &x, 0.0, 2).unwrap()).unwrap();
        let phi: Vec<f64> = phi_field.eval_jets(&s.domain, &x, 0).unwrap().iter().map(|j| j.value()).collect();
        let phi_jets = phi_field.eval_jets(&s.domain, &x, 0).unwrap();
        let star = star_curvature(&geom, &phi_jets).unwrap();
        let n = 3;
        // R(X,Y)Z = R^i_jkl Z^j X^k Y^l ∂_i
        let riem = |i: usize, j: usize, k: usize, l: usize| geom.riemann[((i * n + j) * n + k) * n + l].value();
        for a in 0..n {
            for b in 0..n {
                let phi_b: Vec<f64> = (0..n).map(|l| phi[l * n + b]).collect();
                let m = DMatrix::from_fn(n, n, |i, c| {
                    let mut v = 0.0;
                    for j in 0..n {
                        for l in 0..n {
                            v += riem(i, j, a, l) * phi[j * n + c] * phi_b[l];
                        }
                    }
                    v
                });
                let expect = 0.5 * m.trace();
                assert!((star.s_star[a * n + b].value() - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn covariant_derivative_of_star_tensor_matches_finite_differences() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let n = 3;
    let star_at = |y: &[f64]| -> Vec<f64> {
        let geom = curvature_jet(&s.metric.metric_jet(&s.domain, y, 0.0, 2).unwrap()).unwrap();
        let star = star_curvature(&geom, &s.phi.eval_jets(&s.domain, y, 0).unwrap()).unwrap();
        star.s_star.iter().map(|j| j.value()).collect()
    };
    for x in random_points(4, 5) {
        let geom = curvature_jet(&s.metric.metric_jet(&s.domain, &x, 0.0, 3).unwrap()).unwrap();
        let star = star_curvature(&geom, &s.phi.eval_jets(&s.domain, &x, 1).unwrap()).unwrap();
        let nabla = covariant_derivative_jets(&geom.conn, &[Slot::Lower, Slot::Lower], &star.s_star).unwrap();
        let sv = star_at(&x);
        for k in 0..n {
            let d = richardson_vector(
                |h| {
                    let mut y = x.clone();
                    y[k] += h;
                    Ok(star_at(&y))
                },
                0.0,
                Some(1e-2),
                4,
            )
            .unwrap()
            .value;
            for a in 0..n {
                for b in 0..n {
                    let mut oracle = d[a * n + b];
                    for m in 0..n {
                        oracle -= geom.conn.gamma[(m * n + k) * n + a].value() * sv[m * n + b];
                        oracle -= geom.conn.gamma[(m * n + k) * n + b].value() * sv[a * n + m];
                    }
                    let got = nabla[k * n * n + a * n + b].value();
                    assert!((got - oracle).abs() < 1e-8, "k={k} a={a} b={b}: {got} vs {oracle}");
                }
            }
        }
    }
}

#[test]
fn warped_laplacian_divergence_form() {
    let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let f = Expr::x(0).cos() * 0.7 + (Expr::x(0) * 2.0).sin();
    for x in random_points(5, 5) {
        let geom = curvature_jet(&s.metric.metric_jet(&s.domain, &x, 0.0, 2).unwrap()).unwrap();
        let calc = scalar_calculus_jet(&geom.conn, &f.spatial_jet(&x, 0.0, 2)).unwrap();
        let (fp, fpp) = (-0.7 * x[0].sin() + 2.0 * (2.0 * x[0]).cos(), -0.7 * x[0].cos() - 4.0 * (2.0 * x[0]).sin());
        let expect = fpp + x[0].cos() * fp;
        assert!((calc.laplacian.value() - expect).abs() < 1e-13);
    }
}

#[test]
fn bochner_random_sweep() {
    let d = Domain::unit_torus(3);
    let warped = build(PresetName::Warped3, &PresetParams::default()).unwrap();
    let f = Expr::x(0).sin() + Expr::x(1).cos();
    for x in random_points(6, 5) {
        let r = bochner_residual(3, warped.metric.eval_jets(&d, &x, 0.0, 3).unwrap(), &f.spatial_jet(&x, 0.0, 4)).unwrap();
        assert!(r.abs() < 1e-8);
    }
    let points = random_points(7, 50);
    for (seed, x) in points.iter().enumerate() {
        let g = random_smooth_metric(100 + seed as u64, 3);
        let f = random_band_limited(200 + seed as u64, 3, 2, 1.0).to_expr();
        let r = bochner_residual(3, g.eval_jets(&d, x, 0.0, 3).unwrap(), &f.spatial_jet(x, 0.0, 4)).unwrap();
        assert!(r.abs() < 1e-7, "seed {seed}: {r}");
    }
}
