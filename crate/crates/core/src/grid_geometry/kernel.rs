//! Fixed-dimension `f64` curvature kernel for the per-node hot path.
//!
//! Same conventions as [`crate::curvature`]; stack arrays let the compiler
//! unroll the index loops.

use crate::error::{Result, StarError};
use crate::tensor::cholesky_inverse;

pub(crate) struct FixedStar<const N: usize> {
    pub ginv: [[f64; N]; N],
    pub s: [[f64; N]; N],
    pub ric_star: [[f64; N]; N],
    pub r_star: f64,
    pub scalar: f64,
}

pub(crate) type Mat<const N: usize> = [[f64; N]; N];

/// `dg[k][i][j] = ∂_k g_ij`, `ddg[k][l][i][j] = ∂_k∂_l g_ij`, `phi[i][j] = φ^i_j`.
pub(crate) fn star_fixed<const N: usize>(
    g: &Mat<N>,
    dg: &[Mat<N>; N],
    ddg: &[[Mat<N>; N]; N],
    phi: &Mat<N>,
    want_star: bool,
    eps_pd: f64,
) -> Result<FixedStar<N>> {
    let flat: Vec<f64> = g.iter().flatten().copied().collect();
    let (inv, _) = cholesky_inverse(N, &flat, eps_pd)?;
    let mut ginv = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            ginv[i][j] = inv[i * N + j];
        }
    }

    let mut gl = [[[0.0; N]; N]; N];
    for k in 0..N {
        for i in 0..N {
            for j in 0..N {
                gl[k][i][j] = 0.5 * (dg[i][j][k] + dg[j][i][k] - dg[k][i][j]);
            }
        }
    }
    let mut gam = [[[0.0; N]; N]; N];
    for k in 0..N {
        for i in 0..N {
            for j in 0..N {
                let mut s = 0.0;
                for l in 0..N {
                    s += ginv[k][l] * gl[l][i][j];
                }
                gam[k][i][j] = s;
            }
        }
    }

    let mut dgam = [[[[0.0; N]; N]; N]; N];
    for m in 0..N {
        let mut tmp = [[0.0; N]; N];
        for k in 0..N {
            for b in 0..N {
                let mut s = 0.0;
                for a in 0..N {
                    s += ginv[k][a] * dg[m][a][b];
                }
                tmp[k][b] = s;
            }
        }
        let mut dginv = [[0.0; N]; N];
        for k in 0..N {
            for l in 0..N {
                let mut s = 0.0;
                for b in 0..N {
                    s -= tmp[k][b] * ginv[b][l];
                }
                dginv[k][l] = s;
            }
        }
        let mut dgl = [[[0.0; N]; N]; N];
        for l in 0..N {
            for i in 0..N {
                for j in 0..N {
                    dgl[l][i][j] = 0.5 * (ddg[m][i][j][l] + ddg[m][j][i][l] - ddg[m][l][i][j]);
                }
            }
        }
        for k in 0..N {
            for i in 0..N {
                for j in 0..N {
                    let mut s = 0.0;
                    for l in 0..N {
                        s += dginv[k][l] * gl[l][i][j] + ginv[k][l] * dgl[l][i][j];
                    }
                    dgam[m][k][i][j] = s;
                }
            }
        }
    }

    // R^i_jkl = ∂_kΓ^i_lj − ∂_lΓ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj
    let mut r = [[[[0.0; N]; N]; N]; N];
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                for l in (k + 1)..N {
                    let mut v = dgam[k][i][l][j] - dgam[l][i][k][j];
                    for m in 0..N {
                        v += gam[i][k][m] * gam[m][l][j] - gam[i][l][m] * gam[m][k][j];
                    }
                    r[i][j][k][l] = v;
                    r[i][j][l][k] = -v;
                }
            }
        }
    }
    let mut scalar = 0.0;
    for j in 0..N {
        for l in 0..N {
            let mut ric = 0.0;
            for i in 0..N {
                ric += r[i][j][i][l];
            }
            scalar += ginv[j][l] * ric;
        }
    }
    let mut out = FixedStar { ginv, s: [[0.0; N]; N], ric_star: [[0.0; N]; N], r_star: 0.0, scalar };
    if !want_star {
        return Ok(out);
    }

    let mut t = [[0.0; N]; N];
    for a in 0..N {
        for l in 0..N {
            let mut s = 0.0;
            for c in 0..N {
                for j in 0..N {
                    s += phi[j][c] * r[c][j][a][l];
                }
            }
            t[a][l] = s;
        }
    }
    for a in 0..N {
        for b in 0..N {
            let mut s = 0.0;
            for l in 0..N {
                s += t[a][l] * phi[l][b];
            }
            out.s[a][b] = 0.5 * s;
        }
    }

    // Gram–Schmidt frame on the coordinate basis.
    let inner = |u: &[f64; N], v: &[f64; N]| {
        let mut s = 0.0;
        for a in 0..N {
            for b in 0..N {
                s += g[a][b] * u[a] * v[b];
            }
        }
        s
    };
    let mut frame = [[0.0; N]; N];
    for k in 0..N {
        let mut v = [0.0; N];
        v[k] = 1.0;
        for e in frame.iter().take(k) {
            let c = inner(&v, e);
            for a in 0..N {
                v[a] -= c * e[a];
            }
        }
        let n2 = inner(&v, &v);
        if !(n2 > eps_pd) {
            return Err(StarError::NonPositiveDefinite { min_eigenvalue: n2 });
        }
        let inv_norm = 1.0 / n2.sqrt();
        for a in 0..N {
            frame[k][a] = v[a] * inv_norm;
        }
    }
    // F^{jl} = Σ_i (φe_i)^j e_i^l
    let mut f = [[0.0; N]; N];
    for e in &frame {
        let mut pe = [0.0; N];
        for j in 0..N {
            for p in 0..N {
                pe[j] += phi[j][p] * e[p];
            }
        }
        for j in 0..N {
            for l in 0..N {
                f[j][l] += pe[j] * e[l];
            }
        }
    }
    // R_{mjal} = g_mi R^i_jal
    for a in 0..N {
        let mut q = [0.0; N];
        for m in 0..N {
            let mut s = 0.0;
            for j in 0..N {
                for l in 0..N {
                    if f[j][l] == 0.0 {
                        continue;
                    }
                    let mut rl = 0.0;
                    for i in 0..N {
                        rl += g[m][i] * r[i][j][a][l];
                    }
                    s += rl * f[j][l];
                }
            }
            q[m] = s;
        }
        for b in 0..N {
            let mut s = 0.0;
            for m in 0..N {
                s += q[m] * phi[m][b];
            }
            out.ric_star[a][b] = s;
        }
    }
    let mut r_star = 0.0;
    for e in &frame {
        for a in 0..N {
            for b in 0..N {
                r_star += e[a] * out.ric_star[a][b] * e[b];
            }
        }
    }
    out.r_star = r_star;
    Ok(out)
}
