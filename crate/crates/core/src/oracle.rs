//! Independent reference computations used to check the grid machinery.

/// Gauss–Kronrod 7/15 nodes on `[-1, 1]` (non-negative half).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` on `[a, b]` to absolute
/// tolerance `tol`, bisecting the worst interval first.
pub fn adaptive_quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let f: &dyn Fn(f64) -> f64 = &f;
    let mut intervals = vec![(a, b, gk15(f, a, b))];
    for _ in 0..10_000 {
        let total_err: f64 = intervals.iter().map(|i| i.2 .1).sum();
        if total_err <= tol {
            break;
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        intervals.push((lo, mid, gk15(f, lo, mid)));
        intervals.push((mid, hi, gk15(f, mid, hi)));
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    intervals.iter().map(|i| i.2 .0).sum()
}

/// Modified Bessel function `I_ν(x)` for integer `ν` from its integral
/// representation `(1/π) ∫₀^π e^{x cos θ} cos(νθ) dθ`.
pub fn bessel_i(nu: u32, x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    adaptive_quadrature(|th| (x * th.cos()).exp() * (nu as f64 * th).cos(), 0.0, pi, 1e-15) / pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_trig_integrals() {
        assert!((adaptive_quadrature(|x| x * x, 0.0, 3.0, 1e-14) - 9.0).abs() < 1e-13);
        assert!((adaptive_quadrature(f64::sin, 0.0, PI, 1e-14) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bessel_values_match_series() {
        // I₀(1), I₁(1) from their power series
        let series = |nu: i32, x: f64| {
            let mut s = 0.0;
            let mut fact_k = 1.0;
            for k in 0..30 {
                if k > 0 {
                    fact_k *= k as f64;
                }
                let fact_nk: f64 = (1..=(k + nu)).map(|v| v as f64).product();
                s += (x / 2.0).powi(2 * k + nu) / (fact_k * fact_nk);
            }
            s
        };
        assert!((bessel_i(0, 1.0) - series(0, 1.0)).abs() < 1e-14);
        assert!((bessel_i(1, 1.0) - series(1, 1.0)).abs() < 1e-14);
    }
}
