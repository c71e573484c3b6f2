use crate::curvature::{connection_with_threshold, curvature_jet, star_curvature, MetricJet};
use crate::error::{Result, StarError};
use crate::jet::{Jet, Scalar};
use crate::tensor::EPS_PD;

/// First variation of `g(∇_XY, Z)` along `∂_t g = h` at one point, three ways.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionVariation {
    /// Central ε-difference of `g_kl Γ^k_ij(g + εh) X^iY^jZ^l`, one Richardson level.
    pub fd_value: f64,
    /// `½[(∇_Xh)(Y,Z) + (∇_Yh)(X,Z) − (∇_Zh)(X,Y)]`
    pub standard_value: f64,
    /// `(∇_Xh)(Y,Z) − h(Y,∇_XZ) − h(∇_XY,Z)`, i.e. the `h = −2S*` form
    /// `−2(∇_XS*)(Y,Z) + 2S*(Y,∇_XZ) + 2S*(∇_XY,Z)`.
    pub paper_rhs: f64,
    pub epsilon: f64,
}

fn values_and_first(dim: usize, jets: &[Jet]) -> Result<(Vec<f64>, Vec<f64>)> {
    if jets.len() != dim * dim {
        return Err(StarError::ShapeMismatch("expected n×n component jets".into()));
    }
    if let Some(j) = jets.iter().find(|j| j.order() < 1) {
        return Err(StarError::InsufficientJet { needed: 1, have: j.order() });
    }
    let v = jets.iter().map(|j| j.value()).collect();
    let d = (0..dim * dim * dim).map(|kij| jets[kij % (dim * dim)].d1(kij / (dim * dim))).collect();
    Ok((v, d))
}

fn christoffel(dim: usize, g: &[f64], dg: &[f64]) -> Result<Vec<f64>> {
    let m = MetricJet { dim, g: g.to_vec(), dg: dg.to_vec(), ddg: Vec::new() };
    Ok(connection_with_threshold(&m, EPS_PD)?.gamma)
}

/// `X`, `Y`, `Z` are extended as constant-coefficient fields around the
/// point, so `∇_XY = X^iY^jΓ^k_ij ∂_k`. `g` and `h` are full `n×n` component
/// jets of order ≥ 1 at the point.
pub fn connection_variation_check(g: &[Jet], h: &[Jet], x: &[f64], y: &[f64], z: &[f64]) -> Result<ConnectionVariation> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(StarError::ShapeMismatch("X, Y, Z lengths differ".into()));
    }
    let (gv, dg) = values_and_first(n, g)?;
    let (hv, dh) = values_and_first(n, h)?;
    let gamma = christoffel(n, &gv, &dg)?;

    let norm = |a: &[f64]| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h_norm = norm(&hv).max(norm(&dh));
    let q = |eps: f64| -> Result<f64> {
        let ge: Vec<f64> = gv.iter().zip(&hv).map(|(a, b)| a + eps * b).collect();
        let dge: Vec<f64> = dg.iter().zip(&dh).map(|(a, b)| a + eps * b).collect();
        let gam = christoffel(n, &ge, &dge)?;
        let mut s = 0.0;
        for k in 0..n {
            for l in 0..n {
                let mut c = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        c += gam[(k * n + i) * n + j] * x[i] * y[j];
                    }
                }
                s += gv[k * n + l] * c * z[l];
            }
        }
        Ok(s)
    };
    let (fd_value, epsilon) = if h_norm == 0.0 {
        (0.0, 0.0)
    } else {
        let eps = 1e-5 * norm(&gv) / h_norm;
        let d = |e: f64| -> Result<f64> { Ok((q(e)? - q(-e)?) / (2.0 * e)) };
        let (coarse, fine) = (d(eps)?, d(0.5 * eps)?);
        (fine + (fine - coarse) / 3.0, eps)
    };

    // (∇_k h)_ij = ∂_k h_ij − Γ^m_ki h_mj − Γ^m_kj h_im
    let nabla_h = |k: usize, i: usize, j: usize| {
        let mut v = dh[(k * n + i) * n + j];
        for m in 0..n {
            v -= gamma[(m * n + k) * n + i] * hv[m * n + j] + gamma[(m * n + k) * n + j] * hv[i * n + m];
        }
        v
    };
    let nabla_h_along = |a: &[f64], b: &[f64], c: &[f64]| {
        let mut s = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    s += a[k] * b[i] * c[j] * nabla_h(k, i, j);
                }
            }
        }
        s
    };
    let h_of = |a: &[f64], b: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += hv[i * n + j] * a[i] * b[j];
            }
        }
        s
    };
    let nabla = |a: &[f64], b: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += gamma[(k * n + i) * n + j] * a[i] * b[j];
                    }
                }
                s
            })
            .collect()
    };
    let standard_value = 0.5 * (nabla_h_along(x, y, z) + nabla_h_along(y, x, z) - nabla_h_along(z, x, y));
    let paper_rhs = nabla_h_along(x, y, z) - h_of(y, &nabla(x, z)) - h_of(&nabla(x, y), z);
    Ok(ConnectionVariation { fd_value, standard_value, paper_rhs, epsilon })
}

/// `h = −2 sym S*` as order-1 jets from metric jets of order ≥ 3 and `φ` jets
/// of order ≥ 1.
pub fn star_flow_direction(g: &[Jet], phi: &[Jet]) -> Result<Vec<Jet>> {
    let n = (g.len() as f64).sqrt() as usize;
    let geom = curvature_jet(&MetricJet::from_jets(n, g.to_vec())?)?;
    let star = star_curvature(&geom, phi)?;
    let s = &star.s_star;
    Ok((0..n * n).map(|ij| s[ij].plus(&s[(ij % n) * n + ij / n]).scaled(-1.0)).collect())
}
