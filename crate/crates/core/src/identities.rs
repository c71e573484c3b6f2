//! Pointwise residuals of the algebraic and differential curvature identities.

use serde::Serialize;

use crate::curvature::{covariant_derivative, GeometryJet};
use crate::jet::Scalar;
use crate::tensor::Slot;

/// Max-abs residuals at one point. `scale = max|R_ijkl|` and
/// `ricci_scale = max(|scalar|, max|Ric_ij|)` set the relative size.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `R_ijkl + R_jikl`
    pub antisym_first: f64,
    /// `R_ijkl + R_ijlk`
    pub antisym_last: f64,
    /// `R_ijkl − R_klij`
    pub pair_symmetry: f64,
    /// `R_ijkl + R_iklj + R_iljk`
    pub first_bianchi: f64,
    /// `g^{ij}Ric_ij − scalar`
    pub ricci_trace: f64,
    /// `(∇g)_kij`
    pub metric_parallel: f64,
    /// `Γ^k_ij − Γ^k_ji`
    pub christoffel_symmetry: f64,
    pub scale: f64,
    pub ricci_scale: f64,
}

impl IdentityResiduals {
    /// Componentwise maximum.
    pub fn merge(&self, other: &IdentityResiduals) -> IdentityResiduals {
        IdentityResiduals {
            antisym_first: self.antisym_first.max(other.antisym_first),
            antisym_last: self.antisym_last.max(other.antisym_last),
            pair_symmetry: self.pair_symmetry.max(other.pair_symmetry),
            first_bianchi: self.first_bianchi.max(other.first_bianchi),
            ricci_trace: self.ricci_trace.max(other.ricci_trace),
            metric_parallel: self.metric_parallel.max(other.metric_parallel),
            christoffel_symmetry: self.christoffel_symmetry.max(other.christoffel_symmetry),
            scale: self.scale.max(other.scale),
            ricci_scale: self.ricci_scale.max(other.ricci_scale),
        }
    }
}

pub fn identity_residuals<T: Scalar>(geom: &GeometryJet<T>) -> IdentityResiduals {
    let n = geom.dim();
    let r = |i: usize, j: usize, k: usize, l: usize| geom.riemann_lower[((i * n + j) * n + k) * n + l].value();
    let mut out = IdentityResiduals::default();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = r(i, j, k, l);
                    out.scale = out.scale.max(v.abs());
                    out.antisym_first = out.antisym_first.max((v + r(j, i, k, l)).abs());
                    out.antisym_last = out.antisym_last.max((v + r(i, j, l, k)).abs());
                    out.pair_symmetry = out.pair_symmetry.max((v - r(k, l, i, j)).abs());
                    out.first_bianchi = out.first_bianchi.max((v + r(i, k, l, j) + r(i, l, j, k)).abs());
                }
            }
        }
    }
    let conn = &geom.conn;
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            let ric = geom.ricci[i * n + j].value();
            out.ricci_scale = out.ricci_scale.max(ric.abs());
            trace += conn.ginv[i * n + j].value() * ric;
            for k in 0..n {
                let d = conn.gamma[(k * n + i) * n + j].value() - conn.gamma[(k * n + j) * n + i].value();
                out.christoffel_symmetry = out.christoffel_symmetry.max(d.abs());
            }
        }
    }
    let scalar = geom.scalar.value();
    out.ricci_scale = out.ricci_scale.max(scalar.abs());
    out.ricci_trace = (trace - scalar).abs();
    if let Ok(ng) = covariant_derivative(conn, &[Slot::Lower, Slot::Lower], &conn.g, &conn.dg) {
        out.metric_parallel = ng.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::curvature_jet;
    use crate::expr::Expr;
    use crate::fields::{Domain, MetricField};

    #[test]
    fn warped_point_identities() {
        let g = MetricField::diagonal(vec![Expr::c(1.0), Expr::c(1.0), (Expr::x(0).sin() * 2.0).exp()]);
        let m = g.metric_jet(&Domain::unit_torus(3), &[0.4, 0.1, 0.2], 0.0, 2).unwrap();
        let r = identity_residuals(&curvature_jet(&m).unwrap());
        assert!(r.scale > 0.1);
        for v in [r.antisym_first, r.antisym_last, r.pair_symmetry, r.first_bianchi, r.ricci_trace, r.metric_parallel] {
            assert!(v < 1e-13 * r.scale.max(1.0), "{r:?}");
        }
    }
}
