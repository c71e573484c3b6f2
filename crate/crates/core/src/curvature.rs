//! Pointwise differential geometry of `(g, φ, f, V)`.
//!
//! Every formula is written once over [`Scalar`]: evaluated on `f64` it is the
//! fast path used on grids, evaluated on [`Jet`] it carries Taylor
//! coefficients so derivatives of derived quantities (∇S*, Δ|∇f|², ∇Δf) come
//! out of the same code.
//!
//! Conventions: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, stored as
//! `R^i_jkl` with `R(∂_k,∂_l)∂_j = R^i_jkl ∂_i`; `R_ijkl = g_im R^m_jkl`, so
//! the 4-tensor `R(X,Y,Z,W) = g(R(X,Y)Z,W)` has components `R_{WZXY}`;
//! `Ric_jl = R^i_jil`. The round sphere has positive scalar curvature.
//! A (1,1) tensor `φ` is stored as `φ[i*n + j] = φ^i_j`, i.e. `φ∂_j = φ^i_j ∂_i`.

use crate::error::{Result, StarError};
use crate::jet::{Jet, Scalar};
use crate::tensor::{cholesky_inverse, Slot, EPS_PD};

#[inline]
fn i2(n: usize, a: usize, b: usize) -> usize {
    a * n + b
}
#[inline]
fn i3(n: usize, a: usize, b: usize, c: usize) -> usize {
    (a * n + b) * n + c
}
#[inline]
fn i4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

/// Metric 2-jet: values, first and (optionally) second partials.
#[derive(Clone, Debug)]
pub struct MetricJet<T> {
    pub dim: usize,
    /// `g[i*n+j]`
    pub g: Vec<T>,
    /// `dg[(k*n+i)*n+j] = ∂_k g_ij`
    pub dg: Vec<T>,
    /// `ddg[((k*n+l)*n+i)*n+j] = ∂_k∂_l g_ij`; empty when unavailable.
    pub ddg: Vec<T>,
}

impl MetricJet<Jet> {
    /// Builds the partial-derivative arrays from full `n×n` component jets.
    pub fn from_jets(dim: usize, g: Vec<Jet>) -> Result<Self> {
        let order = g.iter().map(|j| j.order()).min().unwrap_or(0);
        if order < 1 {
            return Err(StarError::InsufficientJet { needed: 1, have: order });
        }
        let n = dim;
        let mut dg = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for ij in 0..n * n {
                dg.push(g[ij].deriv(k));
            }
        }
        let mut ddg = Vec::new();
        if order >= 2 {
            ddg.reserve(n * n * n * n);
            for k in 0..n {
                for l in 0..n {
                    for ij in 0..n * n {
                        ddg.push(dg[k * n * n + ij].deriv(l));
                    }
                }
            }
        }
        Ok(MetricJet { dim, g, dg, ddg })
    }
}

/// `Σ_i a_i` with `a_i` produced by `f`, starting from `zero`.
fn sum_into<T: Scalar>(zero: &T, range: std::ops::Range<usize>, mut f: impl FnMut(&mut T, usize)) -> T {
    let mut acc = zero.clone();
    for i in range {
        f(&mut acc, i);
    }
    acc
}

/// Inverse of a symmetric positive-definite matrix of scalars. For jets the
/// constant-term inverse `A₀` is refined by the terminating Neumann series
/// `Σ_m (−A₀δ)^m A₀` with `δ = G − G(x₀)` nilpotent.
pub fn inverse<T: Scalar>(n: usize, g: &[T], eps_pd: f64) -> Result<(Vec<T>, f64)> {
    let values: Vec<f64> = g.iter().map(|v| v.value()).collect();
    let (inv0, det) = cholesky_inverse(n, &values, eps_pd)?;
    let base: Vec<T> = inv0.iter().map(|&v| g[0].lift(v)).collect();
    let order = g.iter().map(|v| v.jet_order()).min().unwrap_or(0);
    if order == 0 {
        return Ok((base, det));
    }
    let delta: Vec<T> = g.iter().map(|v| v.shifted(-v.value())).collect();
    // P = −A₀ δ
    let mut p = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            p.push(sum_into(&delta[0].zero_like(), 0..n, |acc, k| {
                acc.acc1(-inv0[i2(n, i, k)], &delta[i2(n, k, j)])
            }));
        }
    }
    let mut term = base.clone();
    let mut acc = base;
    for _ in 0..order {
        let mut next = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                next.push(sum_into(&p[0].zero_like(), 0..n, |s, k| {
                    s.acc2(1.0, &p[i2(n, i, k)], &term[i2(n, k, j)])
                }));
            }
        }
        for (a, t) in acc.iter_mut().zip(&next) {
            a.acc1(1.0, t);
        }
        term = next;
    }
    Ok((acc, det))
}

/// Levi-Civita connection at a point.
#[derive(Clone, Debug)]
pub struct Connection<T> {
    pub dim: usize,
    pub g: Vec<T>,
    pub ginv: Vec<T>,
    /// `det g` at the point.
    pub det: f64,
    pub dg: Vec<T>,
    /// Christoffel symbols of the first kind `Γ_kij = g(∇_{∂i}∂_j, ∂_k)`, `[k][i][j]`.
    pub gamma_lower: Vec<T>,
    /// `Γ^k_ij`, stored `[k][i][j]`.
    pub gamma: Vec<T>,
}

pub fn connection<T: Scalar>(m: &MetricJet<T>) -> Result<Connection<T>> {
    connection_with_threshold(m, EPS_PD)
}

pub fn connection_with_threshold<T: Scalar>(m: &MetricJet<T>, eps_pd: f64) -> Result<Connection<T>> {
    let n = m.dim;
    if m.g.len() != n * n || m.dg.len() != n * n * n {
        return Err(StarError::ShapeMismatch("metric jet arrays".into()));
    }
    let (ginv, det) = inverse(n, &m.g, eps_pd)?;
    let zero = m.dg[0].zero_like();
    let mut gamma_lower = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = m.dg[i3(n, i, j, k)].plus(&m.dg[i3(n, j, i, k)]);
                v.acc1(-1.0, &m.dg[i3(n, k, i, j)]);
                gamma_lower.push(v.scaled(0.5));
            }
        }
    }
    let mut gamma = vec![zero.clone(); n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let v = sum_into(&zero, 0..n, |acc, l| {
                    acc.acc2(1.0, &ginv[i2(n, k, l)], &gamma_lower[i3(n, l, i, j)])
                });
                gamma[i3(n, k, j, i)] = v.clone();
                gamma[i3(n, k, i, j)] = v;
            }
        }
    }
    Ok(Connection { dim: n, g: m.g.clone(), ginv, det, dg: m.dg.clone(), gamma_lower, gamma })
}

/// Connection, curvature tensors and their contractions at a point.
#[derive(Clone, Debug)]
pub struct GeometryJet<T> {
    pub conn: Connection<T>,
    /// `∂_mΓ^k_ij`, stored `[m][k][i][j]`.
    pub dgamma: Vec<T>,
    /// `R^i_jkl`, stored `[i][j][k][l]`.
    pub riemann: Vec<T>,
    /// `R_ijkl = g_im R^m_jkl`.
    pub riemann_lower: Vec<T>,
    pub ricci: Vec<T>,
    pub scalar: T,
}

impl<T: Scalar> GeometryJet<T> {
    pub fn dim(&self) -> usize {
        self.conn.dim
    }

    /// `R(X,Y,Z,W) = g(R(X,Y)Z, W)` on coordinate basis vectors.
    pub fn riemann4(&self, x: usize, y: usize, z: usize, w: usize) -> &T {
        &self.riemann_lower[i4(self.dim(), w, z, x, y)]
    }
}

/// Curvature from a metric 2-jet (first and second partials required).
pub fn curvature_jet<T: Scalar>(m: &MetricJet<T>) -> Result<GeometryJet<T>> {
    curvature_with_threshold(m, EPS_PD)
}

pub fn curvature_with_threshold<T: Scalar>(m: &MetricJet<T>, eps_pd: f64) -> Result<GeometryJet<T>> {
    let n = m.dim;
    if m.ddg.len() != n * n * n * n {
        return Err(StarError::InsufficientJet { needed: 2, have: 1 });
    }
    let conn = connection_with_threshold(m, eps_pd)?;
    let zero = m.ddg[0].zero_like();
    let ginv = &conn.ginv;

    // ∂_m g^{kl} = −g^{ka} ∂_m g_ab g^{bl}
    let mut dginv = vec![zero.clone(); n * n * n];
    for mm in 0..n {
        let mut tmp = vec![zero.clone(); n * n];
        for k in 0..n {
            for b in 0..n {
                tmp[i2(n, k, b)] = sum_into(&zero, 0..n, |acc, a| {
                    acc.acc2(1.0, &ginv[i2(n, k, a)], &m.dg[i3(n, mm, a, b)])
                });
            }
        }
        for k in 0..n {
            for l in k..n {
                let v = sum_into(&zero, 0..n, |acc, b| {
                    acc.acc2(-1.0, &tmp[i2(n, k, b)], &ginv[i2(n, b, l)])
                });
                dginv[i3(n, mm, l, k)] = v.clone();
                dginv[i3(n, mm, k, l)] = v;
            }
        }
    }

    let mut dgamma = vec![zero.clone(); n * n * n * n];
    for mm in 0..n {
        // ∂_mΓ_lij
        let mut dgl = vec![zero.clone(); n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut v = m.ddg[i4(n, mm, i, j, l)].plus(&m.ddg[i4(n, mm, j, i, l)]);
                    v.acc1(-1.0, &m.ddg[i4(n, mm, l, i, j)]);
                    let v = v.scaled(0.5);
                    dgl[i3(n, l, j, i)] = v.clone();
                    dgl[i3(n, l, i, j)] = v;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let v = sum_into(&zero, 0..n, |acc, l| {
                        acc.acc2(1.0, &dginv[i3(n, mm, k, l)], &conn.gamma_lower[i3(n, l, i, j)]);
                        acc.acc2(1.0, &ginv[i2(n, k, l)], &dgl[i3(n, l, i, j)]);
                    });
                    dgamma[i4(n, mm, k, j, i)] = v.clone();
                    dgamma[i4(n, mm, k, i, j)] = v;
                }
            }
        }
    }

    // R^i_jkl = ∂_kΓ^i_lj − ∂_lΓ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj
    let gam = &conn.gamma;
    let mut riemann = vec![zero.clone(); n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut v = dgamma[i4(n, k, i, l, j)].minus(&dgamma[i4(n, l, i, k, j)]);
                    for mm in 0..n {
                        v.acc2(1.0, &gam[i3(n, i, k, mm)], &gam[i3(n, mm, l, j)]);
                        v.acc2(-1.0, &gam[i3(n, i, l, mm)], &gam[i3(n, mm, k, j)]);
                    }
                    riemann[i4(n, i, j, l, k)] = v.negated();
                    riemann[i4(n, i, j, k, l)] = v;
                }
            }
        }
    }
    let mut riemann_lower = vec![zero.clone(); n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let v = sum_into(&zero, 0..n, |acc, mm| {
                        acc.acc2(1.0, &conn.g[i2(n, i, mm)], &riemann[i4(n, mm, j, k, l)])
                    });
                    riemann_lower[i4(n, i, j, l, k)] = v.negated();
                    riemann_lower[i4(n, i, j, k, l)] = v;
                }
            }
        }
    }
    let mut ricci = vec![zero.clone(); n * n];
    for j in 0..n {
        for l in 0..n {
            ricci[i2(n, j, l)] = sum_into(&zero, 0..n, |acc, i| acc.acc1(1.0, &riemann[i4(n, i, j, i, l)]));
        }
    }
    let scalar = sum_into(&zero, 0..n, |acc, j| {
        for l in 0..n {
            acc.acc2(1.0, &ginv[i2(n, j, l)], &ricci[i2(n, j, l)]);
        }
    });
    Ok(GeometryJet { conn, dgamma, riemann, riemann_lower, ricci, scalar })
}

/// The two *-Ricci tensors and the *-scalar curvature.
#[derive(Clone, Debug)]
pub struct StarCurvature<T> {
    /// Half-trace form `S*(X,Y) = ½ tr(Z ↦ R(X,φY)φZ)`, unsymmetrized.
    pub s_star: Vec<T>,
    /// Frame form `Ric*(X,Y) = Σ_i R(X,e_i,φe_i,φY)` over a g-orthonormal frame.
    pub ric_star: Vec<T>,
    /// `r* = Σ_i Ric*(e_i,e_i)`.
    pub r_star: T,
    /// Max-norm of the antisymmetric part of `S*` (values).
    pub s_asymmetry: f64,
    pub ric_asymmetry: f64,
}

impl<T: Scalar> StarCurvature<T> {
    /// `sym(S*)` at value level, packed as a full `n×n` array.
    pub fn sym_s_star(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[i2(n, a, b)] = 0.5 * (self.s_star[i2(n, a, b)].value() + self.s_star[i2(n, b, a)].value());
            }
        }
        out
    }

    /// `tr_g S*`.
    pub fn s_star_trace(&self, ginv: &[T]) -> T {
        let n = (ginv.len() as f64).sqrt() as usize;
        sum_into(&self.r_star.zero_like(), 0..n, |acc, a| {
            for b in 0..n {
                acc.acc2(1.0, &ginv[i2(n, a, b)], &self.s_star[i2(n, a, b)]);
            }
        })
    }
}

fn asymmetry<T: Scalar>(n: usize, a: &[T]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(0.5 * (a[i2(n, i, j)].value() - a[i2(n, j, i)].value()).abs());
        }
    }
    worst
}

/// Gram–Schmidt on the coordinate basis in axis order; rows are the frame
/// vectors `e_a` in coordinates.
pub fn orthonormal_frame<T: Scalar>(n: usize, g: &[T]) -> Result<Vec<Vec<T>>> {
    let zero = g[0].zero_like();
    let inner = |u: &[T], v: &[T]| {
        sum_into(&zero, 0..n, |acc, a| {
            for b in 0..n {
                if !(u[a].value() == 0.0 && u[a].jet_order() == 0) {
                    let gu = g[i2(n, a, b)].times(&u[a]);
                    acc.acc2(1.0, &gu, &v[b]);
                }
            }
        })
    };
    let mut frame: Vec<Vec<T>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<T> = (0..n).map(|a| zero.lift(if a == k { 1.0 } else { 0.0 })).collect();
        for e in &frame {
            let c = inner(&v, e);
            for a in 0..n {
                v[a].acc2(-1.0, &c, &e[a]);
            }
        }
        let norm2 = inner(&v, &v);
        if !(norm2.value() > EPS_PD) {
            return Err(StarError::NonPositiveDefinite { min_eigenvalue: norm2.value() });
        }
        let inv_norm = norm2.sqrt().recip();
        frame.push(v.iter().map(|x| x.times(&inv_norm)).collect());
    }
    Ok(frame)
}

/// Both *-Ricci tensors and `r*` from curvature and `φ` at the point.
pub fn star_curvature<T: Scalar>(geom: &GeometryJet<T>, phi: &[T]) -> Result<StarCurvature<T>> {
    let n = geom.dim();
    if phi.len() != n * n {
        return Err(StarError::ShapeMismatch("φ must be an n×n (1,1)-tensor".into()));
    }
    let zero = geom.scalar.zero_like();
    let r = &geom.riemann;

    // Trace form by pure index contraction:
    // S*_ab = ½ Σ_{c,j,l} R^c_{j a l} φ^l_b φ^j_c
    let mut t = vec![zero.clone(); n * n];
    for a in 0..n {
        for l in 0..n {
            t[i2(n, a, l)] = sum_into(&zero, 0..n, |acc, c| {
                for j in 0..n {
                    acc.acc2(1.0, &phi[i2(n, j, c)], &r[i4(n, c, j, a, l)]);
                }
            });
        }
    }
    let mut s_star = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            s_star.push(sum_into(&zero, 0..n, |acc, l| acc.acc2(0.5, &t[i2(n, a, l)], &phi[i2(n, l, b)])));
        }
    }

    // Frame form: Ric*_ab = Σ_{m,j,l} R_{m j a l} φ^m_b F^{jl}, F^{jl} = Σ_i (φe_i)^j e_i^l
    let frame = orthonormal_frame(n, &geom.conn.g)?;
    let phi_e: Vec<Vec<T>> = frame
        .iter()
        .map(|e| {
            (0..n)
                .map(|j| sum_into(&zero, 0..n, |acc, p| acc.acc2(1.0, &phi[i2(n, j, p)], &e[p])))
                .collect()
        })
        .collect();
    let mut f = vec![zero.clone(); n * n];
    for j in 0..n {
        for l in 0..n {
            f[i2(n, j, l)] = sum_into(&zero, 0..n, |acc, i| acc.acc2(1.0, &phi_e[i][j], &frame[i][l]));
        }
    }
    let rl = &geom.riemann_lower;
    let mut ric_star = Vec::with_capacity(n * n);
    for a in 0..n {
        // Q_m = Σ_{j,l} R_{m j a l} F^{jl}
        let q: Vec<T> = (0..n)
            .map(|mm| {
                sum_into(&zero, 0..n, |acc, j| {
                    for l in 0..n {
                        acc.acc2(1.0, &rl[i4(n, mm, j, a, l)], &f[i2(n, j, l)]);
                    }
                })
            })
            .collect();
        for b in 0..n {
            ric_star.push(sum_into(&zero, 0..n, |acc, mm| acc.acc2(1.0, &q[mm], &phi[i2(n, mm, b)])));
        }
    }
    let r_star = sum_into(&zero, 0..n, |acc, i| {
        for a in 0..n {
            let ea_ric = sum_into(&zero, 0..n, |s, b| s.acc2(1.0, &ric_star[i2(n, a, b)], &frame[i][b]));
            acc.acc2(1.0, &frame[i][a], &ea_ric);
        }
    });
    let s_asymmetry = asymmetry(n, &s_star);
    let ric_asymmetry = asymmetry(n, &ric_star);
    Ok(StarCurvature { s_star, ric_star, r_star, s_asymmetry, ric_asymmetry })
}

/// Covariant derivative of a tensor of rank ≤ 2 with the given slot
/// variances. `partials[k * len + idx] = ∂_k T[idx]`; the result is stored
/// `[k][idx]`, i.e. the derivative index comes first.
pub fn covariant_derivative<T: Scalar>(
    conn: &Connection<T>,
    slots: &[Slot],
    tensor: &[T],
    partials: &[T],
) -> Result<Vec<T>> {
    let n = conn.dim;
    let rank = slots.len();
    if rank > 2 {
        return Err(StarError::ShapeMismatch(format!("covariant derivative of rank {rank} unsupported")));
    }
    let len = n.pow(rank as u32);
    if tensor.len() != len || partials.len() != n * len {
        return Err(StarError::ShapeMismatch("tensor/partials length".into()));
    }
    let gam = &conn.gamma;
    let mut out = Vec::with_capacity(n * len);
    for k in 0..n {
        for idx in 0..len {
            let mut v = partials[k * len + idx].clone();
            let digits: Vec<usize> = (0..rank).map(|s| (idx / n.pow((rank - 1 - s) as u32)) % n).collect();
            for (s, slot) in slots.iter().enumerate() {
                let stride = n.pow((rank - 1 - s) as u32);
                let base = idx - digits[s] * stride;
                for mm in 0..n {
                    match slot {
                        // + Γ^i_km T^{..m..}
                        Slot::Upper => v.acc2(1.0, &gam[i3(n, digits[s], k, mm)], &tensor[base + mm * stride]),
                        // − Γ^m_ki T_{..m..}
                        Slot::Lower => v.acc2(-1.0, &gam[i3(n, mm, k, digits[s])], &tensor[base + mm * stride]),
                    }
                }
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Covariant derivative of a tensor given as jets; partials come from the jets.
pub fn covariant_derivative_jets(conn: &Connection<Jet>, slots: &[Slot], tensor: &[Jet]) -> Result<Vec<Jet>> {
    let n = conn.dim;
    let have = tensor.iter().map(|j| j.order()).min().unwrap_or(0);
    if have < 1 {
        return Err(StarError::InsufficientJet { needed: 1, have });
    }
    let mut partials = Vec::with_capacity(n * tensor.len());
    for k in 0..n {
        for t in tensor {
            partials.push(t.deriv(k));
        }
    }
    covariant_derivative(conn, slots, tensor, &partials)
}

/// Gradient, Hessian and Laplacian of a scalar function.
#[derive(Clone, Debug)]
pub struct ScalarCalculus<T> {
    pub df: Vec<T>,
    /// `∇f = g⁻¹ df`
    pub grad: Vec<T>,
    pub grad_sq: T,
    /// `Hess f = ∇df`, `[i][j]`
    pub hess: Vec<T>,
    pub laplacian: T,
}

/// `df[i] = ∂_i f`, `ddf[i*n+j] = ∂_i∂_j f`.
pub fn scalar_calculus<T: Scalar>(conn: &Connection<T>, df: &[T], ddf: &[T]) -> ScalarCalculus<T> {
    let n = conn.dim;
    let zero = df[0].zero_like();
    let grad: Vec<T> = (0..n)
        .map(|i| sum_into(&zero, 0..n, |acc, j| acc.acc2(1.0, &conn.ginv[i2(n, i, j)], &df[j])))
        .collect();
    let grad_sq = sum_into(&zero, 0..n, |acc, i| acc.acc2(1.0, &grad[i], &df[i]));
    let mut hess = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = ddf[i2(n, i, j)].clone();
            for k in 0..n {
                v.acc2(-1.0, &conn.gamma[i3(n, k, i, j)], &df[k]);
            }
            hess.push(v);
        }
    }
    let laplacian = sum_into(&zero, 0..n, |acc, i| {
        for j in 0..n {
            acc.acc2(1.0, &conn.ginv[i2(n, i, j)], &hess[i2(n, i, j)]);
        }
    });
    ScalarCalculus { df: df.to_vec(), grad, grad_sq, hess, laplacian }
}

/// [`scalar_calculus`] on a jet of `f` (order ≥ 2).
pub fn scalar_calculus_jet(conn: &Connection<Jet>, f: &Jet) -> Result<ScalarCalculus<Jet>> {
    if f.order() < 2 {
        return Err(StarError::InsufficientJet { needed: 2, have: f.order() });
    }
    let n = conn.dim;
    let df: Vec<Jet> = (0..n).map(|i| f.deriv(i)).collect();
    let ddf: Vec<Jet> = (0..n * n).map(|ij| df[ij / n].deriv(ij % n)).collect();
    Ok(scalar_calculus(conn, &df, &ddf))
}

/// `(£_V g)_ij = ∇_iV_j + ∇_jV_i`. `v[k] = V^k`, `dv[i*n+k] = ∂_i V^k`.
pub fn lie_derivative_metric<T: Scalar>(conn: &Connection<T>, v: &[T], dv: &[T]) -> Vec<T> {
    let n = conn.dim;
    let zero = v[0].zero_like();
    // V_j = g_jk V^k and ∂_i V_j = ∂_i g_jk V^k + g_jk ∂_i V^k
    let v_low: Vec<T> = (0..n)
        .map(|j| sum_into(&zero, 0..n, |acc, k| acc.acc2(1.0, &conn.g[i2(n, j, k)], &v[k])))
        .collect();
    let mut nabla = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut d = sum_into(&zero, 0..n, |acc, k| {
                acc.acc2(1.0, &conn.dg[i3(n, i, j, k)], &v[k]);
                acc.acc2(1.0, &conn.g[i2(n, j, k)], &dv[i2(n, i, k)]);
            });
            for mm in 0..n {
                d.acc2(-1.0, &conn.gamma[i3(n, mm, i, j)], &v_low[mm]);
            }
            nabla.push(d);
        }
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(nabla[i2(n, i, j)].plus(&nabla[i2(n, j, i)]));
        }
    }
    out
}

/// Residual of the Bochner identity
/// `½Δ|∇f|² − |Hess f|² − g(∇Δf, ∇f) − Ric(∇f,∇f)` at the expansion point.
/// Requires `f` of order 4 and `g` of order ≥ 3.
pub fn bochner_residual(dim: usize, g: Vec<Jet>, f: &Jet) -> Result<f64> {
    let g_order = g.iter().map(|j| j.order()).min().unwrap_or(0);
    if g_order < 3 {
        return Err(StarError::InsufficientJet { needed: 3, have: g_order });
    }
    if f.order() < 4 {
        return Err(StarError::InsufficientJet { needed: 4, have: f.order() });
    }
    let n = dim;
    let m = MetricJet::from_jets(n, g)?;
    let geom = curvature_jet(&m)?;
    let conn = &geom.conn;
    let calc = scalar_calculus_jet(conn, f)?;
    let gv = |k: usize| conn.gamma[k].value();
    let ginv: Vec<f64> = conn.ginv.iter().map(|v| v.value()).collect();

    // Δ|∇f|² at value level
    let h = &calc.grad_sq;
    let mut lap_h = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut hij = h.deriv(i).deriv(j).value();
            for k in 0..n {
                hij -= gv(i3(n, k, i, j)) * h.d1(k);
            }
            lap_h += ginv[i2(n, i, j)] * hij;
        }
    }
    let hess: Vec<f64> = calc.hess.iter().map(|v| v.value()).collect();
    let hess_sq = crate::tensor::contract_raw(n, &hess, &hess, &ginv);
    let grad: Vec<f64> = calc.grad.iter().map(|v| v.value()).collect();
    let grad_lap: f64 = (0..n).map(|i| calc.laplacian.d1(i) * grad[i]).sum();
    let mut ric_ff = 0.0;
    for i in 0..n {
        for j in 0..n {
            ric_ff += geom.ricci[i2(n, i, j)].value() * grad[i] * grad[j];
        }
    }
    Ok(0.5 * lap_h - hess_sq - grad_lap - ric_ff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn jets(exprs: &[Expr], x: &[f64], order: usize) -> Vec<Jet> {
        exprs.iter().map(|e| e.spatial_jet(x, 0.0, order)).collect()
    }

    fn warped(u: Expr) -> Vec<Expr> {
        let z = Expr::c(0.0);
        let one = Expr::c(1.0);
        vec![
            one.clone(), z.clone(), z.clone(),
            z.clone(), one, z.clone(),
            z.clone(), z, (u * 2.0).exp(),
        ]
    }

    fn geometry(exprs: &[Expr], x: &[f64], order: usize) -> GeometryJet<Jet> {
        let m = MetricJet::from_jets(3, jets(exprs, x, order)).unwrap();
        curvature_jet(&m).unwrap()
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let flat = warped(Expr::c(0.0));
        let geom = geometry(&flat, &[0.3, 0.1, 2.0], 2);
        assert!(geom.conn.gamma.iter().all(|v| v.value() == 0.0));
        assert!(geom.riemann.iter().all(|v| v.value() == 0.0));
        assert_eq!(geom.scalar.value(), 0.0);
    }

    #[test]
    fn warped_metric_closed_forms() {
        // u = sin x: u' = cos x, u'' = −sin x
        let x = 0.7f64;
        let geom = geometry(&warped(Expr::x(0).sin()), &[x, 0.2, -1.0], 2);
        let n = 3;
        let (u, du, ddu) = (x.sin(), x.cos(), -x.sin());
        let e2u = (2.0 * u).exp();
        assert!((geom.conn.gamma[i3(n, 2, 0, 2)].value() - du).abs() < 1e-14);
        assert!((geom.conn.gamma[i3(n, 0, 2, 2)].value() + du * e2u).abs() < 1e-13);
        let r1313 = geom.riemann_lower[i4(n, 0, 2, 0, 2)].value();
        assert!((r1313 + (ddu + du * du) * e2u).abs() < 1e-13);
        assert!((geom.scalar.value() + 2.0 * (ddu + du * du)).abs() < 1e-13);
    }

    #[test]
    fn scaling_law() {
        let base = warped(Expr::x(0).sin() * 0.5);
        let c = 2.5;
        let scaled: Vec<Expr> = base.iter().map(|e| e.clone() * c).collect();
        let p = [0.4, -0.3, 0.8];
        let a = geometry(&base, &p, 2);
        let b = geometry(&scaled, &p, 2);
        for (x, y) in a.conn.gamma.iter().zip(&b.conn.gamma) {
            assert!((x.value() - y.value()).abs() < 1e-14);
        }
        for (x, y) in a.riemann_lower.iter().zip(&b.riemann_lower) {
            assert!((c * x.value() - y.value()).abs() < 1e-13);
        }
        assert!((a.scalar.value() / c - b.scalar.value()).abs() < 1e-14);
    }

    #[test]
    fn star_tensors_vanish_for_zero_phi() {
        let geom = geometry(&warped(Expr::x(0).sin()), &[0.5, 0.0, 0.0], 2);
        let phi = vec![Jet::constant(3, 0.0); 9];
        let star = star_curvature(&geom, &phi).unwrap();
        assert!(star.s_star.iter().chain(&star.ric_star).all(|v| v.value() == 0.0));
        assert_eq!(star.r_star.value(), 0.0);
    }

    fn compatible_rotation(u: Expr) -> Vec<Expr> {
        let z = Expr::c(0.0);
        vec![
            z.clone(), z.clone(), -(u.clone().exp()),
            z.clone(), z.clone(), z.clone(),
            (-u).exp(), z.clone(), z,
        ]
    }

    #[test]
    fn compatible_rotation_gives_gauss_curvature() {
        let x = 0.9f64;
        let u = Expr::x(0).sin() * 0.5;
        let p = [x, 0.4, -0.7];
        let geom = geometry(&warped(u.clone()), &p, 2);
        let phi = jets(&compatible_rotation(u), &p, 2);
        let star = star_curvature(&geom, &phi).unwrap();
        let (du, ddu) = (0.5 * x.cos(), -0.5 * x.sin());
        let k = -(ddu + du * du);
        let e2u = (2.0 * 0.5 * x.sin()).exp();
        let mut expect = [0.0; 9];
        expect[0] = k;
        expect[8] = k * e2u;
        for ab in 0..9 {
            assert!((star.s_star[ab].value() - expect[ab]).abs() < 1e-13, "S* {ab}");
            assert!((star.ric_star[ab].value() - expect[ab]).abs() < 1e-13, "Ric* {ab}");
        }
        assert!((star.r_star.value() - 2.0 * k).abs() < 1e-13);
        assert!(star.s_asymmetry < 1e-14 && star.ric_asymmetry < 1e-14);
        let tr = star.s_star_trace(&geom.conn.ginv);
        assert!((tr.value() - star.r_star.value()).abs() < 1e-13);
    }

    #[test]
    fn rotation_across_flat_fibre_is_star_flat() {
        let p = [0.3, 0.0, 1.0];
        let geom = geometry(&warped(Expr::x(0).sin()), &p, 2);
        let mut phi = vec![Jet::constant(3, 0.0); 9];
        phi[i2(3, 1, 0)] = Jet::constant(3, 1.0);
        phi[i2(3, 0, 1)] = Jet::constant(3, -1.0);
        let star = star_curvature(&geom, &phi).unwrap();
        assert!(star.s_star.iter().chain(&star.ric_star).all(|v| v.value().abs() < 1e-14));
    }

    #[test]
    fn metric_is_parallel() {
        let exprs = warped(Expr::x(0).sin() + (Expr::x(1) * 2.0).cos() * 0.3);
        let m = MetricJet::from_jets(3, jets(&exprs, &[0.1, 0.9, 0.3], 2)).unwrap();
        let conn = connection(&m).unwrap();
        let ng = covariant_derivative_jets(&conn, &[Slot::Lower, Slot::Lower], &conn.g).unwrap();
        assert!(ng.iter().all(|v| v.value().abs() < 1e-13));
    }

    #[test]
    fn flat_lie_derivative_of_sine_field() {
        let flat = warped(Expr::c(0.0));
        let x = 0.6f64;
        let m = MetricJet::from_jets(3, jets(&flat, &[x, 0.0, 0.0], 1)).unwrap();
        let conn = connection(&m).unwrap();
        let v = jets(&[Expr::x(0).sin(), Expr::c(0.0), Expr::c(0.0)], &[x, 0.0, 0.0], 1);
        let dv: Vec<Jet> = (0..9).map(|ik| v[ik % 3].deriv(ik / 3)).collect();
        let lie = lie_derivative_metric(&conn, &v, &dv);
        assert!((lie[0].value() - 2.0 * x.cos()).abs() < 1e-15);
        assert!(lie[1..].iter().all(|c| c.value() == 0.0));
    }

    #[test]
    fn translation_along_warped_fibre_is_killing() {
        let exprs = warped(Expr::x(0).sin());
        let p = [0.8, 0.1, 0.4];
        let m = MetricJet::from_jets(3, jets(&exprs, &p, 1)).unwrap();
        let conn = connection(&m).unwrap();
        let v = jets(&[Expr::c(0.0), Expr::c(0.0), Expr::c(1.0)], &p, 1);
        let dv: Vec<Jet> = (0..9).map(|ik| v[ik % 3].deriv(ik / 3)).collect();
        assert!(lie_derivative_metric(&conn, &v, &dv).iter().all(|c| c.value().abs() < 1e-15));
    }

    #[test]
    fn flat_scalar_calculus_of_cosine() {
        let flat = warped(Expr::c(0.0));
        let x = 1.1f64;
        let p = [x, 0.2, 0.3];
        let m = MetricJet::from_jets(3, jets(&flat, &p, 2)).unwrap();
        let conn = connection(&m).unwrap();
        let f = Expr::x(0).cos().spatial_jet(&p, 0.0, 2);
        let calc = scalar_calculus_jet(&conn, &f).unwrap();
        assert!((calc.grad[0].value() + x.sin()).abs() < 1e-15);
        assert!((calc.grad_sq.value() - x.sin().powi(2)).abs() < 1e-15);
        assert!((calc.laplacian.value() + x.cos()).abs() < 1e-15);
    }

    #[test]
    fn bochner_on_flat_torus() {
        let flat = warped(Expr::c(0.0));
        let p = [0.4, 1.3, -0.2];
        let f = Expr::x(0).cos().spatial_jet(&p, 0.0, 4);
        let r = bochner_residual(3, jets(&flat, &p, 4), &f).unwrap();
        assert!(r.abs() < 1e-9);
    }

    #[test]
    fn insufficient_orders_are_reported() {
        let flat = warped(Expr::c(0.0));
        let p = [0.0; 3];
        let f = Expr::x(0).cos().spatial_jet(&p, 0.0, 3);
        assert!(matches!(
            bochner_residual(3, jets(&flat, &p, 4), &f),
            Err(StarError::InsufficientJet { .. })
        ));
        let curved = warped(Expr::x(0).sin());
        let m = MetricJet::from_jets(3, jets(&curved, &p, 1)).unwrap();
        assert!(matches!(curvature_jet(&m), Err(StarError::InsufficientJet { .. })));
    }
}
