use proptest::prelude::*;

use starlab_core::curvature::curvature_jet;
use starlab_core::fields::{integrate_over_torus, richardson_time_derivative, spectral_derivative, Domain, Grid, GridScalar};
use starlab_core::flow::UConvention;
use starlab_core::functionals::{omega_unchecked, EntropyContext};
use starlab_core::grid_geometry::star_on_grid;
use starlab_core::identities::identity_residuals;
use starlab_core::presets::{build, random_band_limited, random_smooth_metric, PresetName, PresetParams};
use starlab_core::tensor::EPS_PD;
use starlab_core::Scalar;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn riemann_symmetries_on_random_metrics(seed in 0u64..10_000, x in prop::array::uniform3(0.0f64..6.3)) {
        let g = random_smooth_metric(seed, 3);
        let geom = curvature_jet(&g.metric_jet(&Domain::unit_torus(3), &x, 0.0, 2).unwrap()).unwrap();
        let r = identity_residuals(&geom);
        let s = r.scale.max(1.0);
        prop_assert!(r.antisym_first <= 1e-12 * s);
        prop_assert!(r.antisym_last <= 1e-12 * s);
        prop_assert!(r.pair_symmetry <= 1e-9 * s);
        prop_assert!(r.first_bianchi <= 1e-9 * s);
        prop_assert!(r.metric_parallel <= 1e-10);
    }

    #[test]
    fn spectral_derivative_matches_analytic(seed in 0u64..10_000, axis in 0usize..3) {
        let p = random_band_limited(seed, 3, 4, 1.0).to_expr();
        let grid = Grid::new(&Domain::unit_torus(3), 16).unwrap();
        let f = GridScalar::sample(&grid, |x| p.value(x, 0.0));
        let mut alpha = [0u8; 3];
        alpha[axis] = 1;
        let d = spectral_derivative(&f, &alpha).unwrap();
        for (node, v) in d.data.iter().enumerate() {
            let exact = p.spatial_jet(&grid.point(node), 0.0, 1).d1(axis);
            prop_assert!((v - exact).abs() < 1e-11);
        }
        let integral: f64 = d.data.iter().sum::<f64>() * grid.cell_volume();
        prop_assert!(integral.abs() < 1e-11);
    }

    #[test]
    fn richardson_is_exact_on_cubics(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, t0 in -1.0f64..1.0) {
        let d = richardson_time_derivative(|t| Ok(a * t * t * t + b * t * t + c * t), t0, None, 3).unwrap();
        let exact = 3.0 * a * t0 * t0 + 2.0 * b * t0 + c;
        prop_assert!((d.value - exact).abs() < 1e-9);
    }

    #[test]
    fn jet_mixed_partials_commute(seed in 0u64..10_000, x in prop::array::uniform3(0.0f64..6.3)) {
        let p = random_band_limited(seed, 3, 3, 1.0).to_expr();
        let e = (p.clone() * 0.5).exp() * p;
        let j = e.spatial_jet(&x, 0.0, 3);
        for (i, k) in [(0, 1), (0, 2), (1, 2)] {
            let a = j.deriv(i).deriv(k).value();
            let b = j.deriv(k).deriv(i).value();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn omega_is_scale_invariant(c in 0.5f64..2.0, seed in 0u64..1_000) {
        let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
        let grid = Grid::new(&s.domain, 16).unwrap();
        let g = s.metric.to_grid(&grid, 0.0).unwrap();
        let gc = g.axpby(c, &g, 0.0);
        let p = random_band_limited(seed, 3, 2, 0.8).to_expr();
        let f = GridScalar::sample(&grid, |x| p.value(x, 0.0));
        let phi = s.phi.node_values(&grid).unwrap();
        let tau = 0.7;
        let eval = |g: &_, tau: f64| {
            let star = star_on_grid(g, &phi, false, EPS_PD).unwrap();
            let ctx = EntropyContext::new(tau, UConvention::Normalized, 3).unwrap();
            omega_unchecked(g, &f, &star, &ctx).unwrap()
        };
        let (w1, i1) = eval(&g, tau);
        let (w2, i2) = eval(&gc, c * tau);
        prop_assert!((w1 - w2).abs() < 1e-8 * w1.abs().max(1.0));
        prop_assert!((i1 - i2).abs() < 1e-12 * i1);
    }

    #[test]
    fn total_derivative_integrates_to_zero(seed in 0u64..10_000, axis in 0usize..3) {
        let s = build(PresetName::Warped3, &PresetParams::default()).unwrap();
        let grid = Grid::new(&s.domain, 16).unwrap();
        let g = s.metric.to_grid(&grid, 0.0).unwrap();
        let p = random_band_limited(seed, 3, 3, 1.0).to_expr();
        // ∂_a(√g s)/√g integrates to zero against dV_g.
        let density = |x: &[f64]| x[0].sin().exp();
        let f = GridScalar::sample(&grid, |x| density(x) * p.value(x, 0.0));
        let mut alpha = [0u8; 3];
        alpha[axis] = 1;
        let d = spectral_derivative(&f, &alpha).unwrap();
        let integrand: Vec<f64> = d.data.iter().enumerate().map(|(k, v)| v / density(&grid.point(k))).collect();
        prop_assert!(integrate_over_torus(&integrand, &g).unwrap().abs() < 1e-10);
    }
}
