//! Pointwise geometry evaluated at every node of a torus grid.

mod kernel;

use rayon::prelude::*;

use crate::curvature::{connection_with_threshold, curvature_with_threshold, scalar_calculus, star_curvature};
use crate::error::{Result, StarError};
use crate::fields::{packed_index, packed_pairs, GridMetric, GridScalar, MetricNodes, NodeDerivatives};
use crate::tensor::{contract_raw, min_eigenvalue};

/// Which scalar plays the role of `R*` in the entropy formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RStarMode {
    /// `r* = Σ Ric*(e_i,e_i)`.
    #[default]
    StarScalar,
    /// `tr_g S*`.
    TraceS,
    /// Plain scalar curvature.
    Scalar,
}

/// *-curvature data on the grid.
#[derive(Clone, Debug)]
pub struct StarGrid {
    /// `sym S*` in packed storage.
    pub s_sym: GridMetric,
    pub r_star: Vec<f64>,
    pub trace_s: Vec<f64>,
    pub scalar: Vec<f64>,
    /// `max_x |S*|_g`.
    pub s_norm_max: f64,
    pub s_asymmetry: f64,
    pub ric_asymmetry: f64,
    /// `max_x |S* − Ric*|` componentwise.
    pub s_ric_gap: f64,
}

impl StarGrid {
    pub fn r_star_mode(&self, mode: RStarMode) -> &[f64] {
        match mode {
            RStarMode::StarScalar => &self.r_star,
            RStarMode::TraceS => &self.trace_s,
            RStarMode::Scalar => &self.scalar,
        }
    }
}

struct NodeStar {
    s_sym: Vec<f64>,
    r_star: f64,
    trace_s: f64,
    scalar: f64,
    s_norm: f64,
    s_asym: f64,
    ric_asym: f64,
    gap: f64,
}

fn node_star_fixed<const N: usize>(
    nodes: &MetricNodes,
    p: usize,
    phi: &[f64],
    want_star: bool,
    eps_pd: f64,
) -> Result<NodeStar> {
    let mut g = [[0.0; N]; N];
    let mut dg = [[[0.0; N]; N]; N];
    let mut ddg = [[[[0.0; N]; N]; N]; N];
    let mut ph = [[0.0; N]; N];
    for i in 0..N {
        for j in i..N {
            g[i][j] = nodes.value(p, i, j);
            g[j][i] = g[i][j];
            for k in 0..N {
                dg[k][i][j] = nodes.first(p, k, i, j);
                dg[k][j][i] = dg[k][i][j];
                for l in k..N {
                    let v = nodes.second(p, k, l, i, j);
                    ddg[k][l][i][j] = v;
                    ddg[k][l][j][i] = v;
                    ddg[l][k][i][j] = v;
                    ddg[l][k][j][i] = v;
                }
            }
        }
    }
    if want_star {
        for i in 0..N {
            for j in 0..N {
                ph[i][j] = phi[i * N + j];
            }
        }
    }
    let k = kernel::star_fixed::<N>(&g, &dg, &ddg, &ph, want_star, eps_pd)?;
    let (mut s_sym, mut trace_s, mut s_norm2, mut s_asym, mut ric_asym, mut gap) =
        (Vec::with_capacity(N * (N + 1) / 2), 0.0, 0.0, 0.0f64, 0.0f64, 0.0f64);
    let mut sym = [[0.0; N]; N];
    for a in 0..N {
        for b in 0..N {
            sym[a][b] = 0.5 * (k.s[a][b] + k.s[b][a]);
            trace_s += k.ginv[a][b] * k.s[a][b];
            s_asym = s_asym.max(0.5 * (k.s[a][b] - k.s[b][a]).abs());
            ric_asym = ric_asym.max(0.5 * (k.ric_star[a][b] - k.ric_star[b][a]).abs());
            gap = gap.max((k.s[a][b] - k.ric_star[a][b]).abs());
        }
    }
    for a in 0..N {
        for b in a..N {
            s_sym.push(sym[a][b]);
        }
    }
    for i in 0..N {
        for j in 0..N {
            for kk in 0..N {
                for l in 0..N {
                    s_norm2 += sym[i][j] * sym[kk][l] * k.ginv[i][kk] * k.ginv[j][l];
                }
            }
        }
    }
    Ok(NodeStar {
        s_sym,
        r_star: k.r_star,
        trace_s,
        scalar: k.scalar,
        s_norm: s_norm2.max(0.0).sqrt(),
        s_asym,
        ric_asym,
        gap,
    })
}

fn node_star_generic(nodes: &MetricNodes, p: usize, phi: &[f64], want_star: bool, eps_pd: f64) -> Result<NodeStar> {
    let n = nodes.dim;
    let pairs = packed_pairs(n);
    let m = nodes.metric_jet(p);
    let geom = curvature_with_threshold(&m, eps_pd)?;
    let scalar = geom.scalar;
    if !want_star {
        return Ok(NodeStar {
            s_sym: vec![0.0; pairs.len()],
            r_star: 0.0,
            trace_s: 0.0,
            scalar,
            s_norm: 0.0,
            s_asym: 0.0,
            ric_asym: 0.0,
            gap: 0.0,
        });
    }
    let star = star_curvature(&geom, phi)?;
    let sym = star.sym_s_star(n);
    let ginv = &geom.conn.ginv;
    let trace_s: f64 = (0..n * n).map(|ab| ginv[ab] * star.s_star[ab]).sum();
    let gap = star.s_star.iter().zip(&star.ric_star).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    Ok(NodeStar {
        s_sym: pairs.iter().map(|&(i, j)| sym[i * n + j]).collect(),
        r_star: star.r_star,
        trace_s,
        scalar,
        s_norm: contract_raw(n, &sym, &sym, ginv).max(0.0).sqrt(),
        s_asym: star.s_asymmetry,
        ric_asym: star.ric_asymmetry,
        gap,
    })
}

/// `S*`, `Ric*`, `r*` and the scalar curvature at every node. `phi[node]` is
/// the full `φ^i_j` matrix. A vanishing `φ` short-circuits to zero.
pub fn star_on_grid(g: &GridMetric, phi: &[Vec<f64>], phi_is_zero: bool, eps_pd: f64) -> Result<StarGrid> {
    star_on_grid_with(g, phi, phi_is_zero, eps_pd, false)
}

pub(crate) fn star_on_grid_with(
    g: &GridMetric,
    phi: &[Vec<f64>],
    phi_is_zero: bool,
    eps_pd: f64,
    force_generic: bool,
) -> Result<StarGrid> {
    let n = g.dim();
    let grid = &g.grid;
    if !phi_is_zero && phi.len() != grid.len() {
        return Err(StarError::ShapeMismatch("φ node values".into()));
    }
    let nodes = crate::fields::MetricField::Grid(g.clone()).node_derivatives(grid, 0.0, 2)?;
    let pairs = packed_pairs(n);
    let want = !phi_is_zero;
    let empty: Vec<f64> = Vec::new();
    let per_node: Vec<NodeStar> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let ph = if want { &phi[p] } else { &empty };
            match (force_generic, n) {
                (false, 2) => node_star_fixed::<2>(&nodes, p, ph, want, eps_pd),
                (false, 3) => node_star_fixed::<3>(&nodes, p, ph, want, eps_pd),
                (false, 4) => node_star_fixed::<4>(&nodes, p, ph, want, eps_pd),
                (false, 5) => node_star_fixed::<5>(&nodes, p, ph, want, eps_pd),
                _ => node_star_generic(&nodes, p, ph, want, eps_pd),
            }
        })
        .collect::<Result<_>>()?;
    let mut comps = vec![Vec::with_capacity(grid.len()); pairs.len()];
    for node in &per_node {
        for (c, v) in comps.iter_mut().zip(&node.s_sym) {
            c.push(*v);
        }
    }
    let fold = |f: fn(&NodeStar) -> f64| per_node.iter().map(f).fold(0.0, f64::max);
    Ok(StarGrid {
        s_sym: GridMetric::new(grid, comps)?,
        r_star: per_node.iter().map(|s| s.r_star).collect(),
        trace_s: per_node.iter().map(|s| s.trace_s).collect(),
        scalar: per_node.iter().map(|s| s.scalar).collect(),
        s_norm_max: fold(|s| s.s_norm),
        s_asymmetry: fold(|s| s.s_asym),
        ric_asymmetry: fold(|s| s.ric_asym),
        s_ric_gap: fold(|s| s.gap),
    })
}

/// Smallest metric eigenvalue over all nodes.
pub fn min_eigenvalue_on_grid(g: &GridMetric) -> f64 {
    let n = g.dim();
    (0..g.grid.len())
        .into_par_iter()
        .map(|p| min_eigenvalue(n, &g.at(p)))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `|∇f|²` and `Δf` at every node.
#[derive(Clone, Debug)]
pub struct ScalarCalculusGrid {
    pub grad_sq: Vec<f64>,
    pub laplacian: Vec<f64>,
}

/// Needs metric partials of order ≥ 1 and `f` partials of order ≥ 2.
pub fn scalar_calculus_on_grid(g: &MetricNodes, f: &NodeDerivatives, eps_pd: f64) -> Result<ScalarCalculusGrid> {
    let n = g.dim;
    if g.order < 1 || f.order < 2 {
        return Err(StarError::InsufficientJet { needed: 2, have: f.order.min(g.order + 1) });
    }
    let len = f.values().len();
    let out: Vec<(f64, f64)> = (0..len)
        .into_par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let m = g.metric_jet(p);
            let conn = connection_with_threshold(&m, eps_pd)?;
            let df: Vec<f64> = (0..n).map(|i| f.first(i)[p]).collect();
            let ddf: Vec<f64> = (0..n * n).map(|ij| f.second(ij / n, ij % n)[p]).collect();
            let calc = scalar_calculus(&conn, &df, &ddf);
            Ok((calc.grad_sq, calc.laplacian))
        })
        .collect::<Result<_>>()?;
    Ok(ScalarCalculusGrid { grad_sq: out.iter().map(|v| v.0).collect(), laplacian: out.iter().map(|v| v.1).collect() })
}

/// Node data for `Δf = g^{ij}∂_i∂_j f − C^k∂_k f` and `|∇f|² = g^{ij}∂_if∂_jf`,
/// with `C^k = g^{ij}Γ^k_ij`.
#[derive(Clone, Debug)]
pub struct LaplaceData {
    pub dim: usize,
    /// Packed `g^{ij}`.
    pub ginv: Vec<Vec<f64>>,
    pub contracted: Vec<Vec<f64>>,
}

impl LaplaceData {
    pub fn new(g: &GridMetric, eps_pd: f64) -> Result<Self> {
        let n = g.dim();
        let nodes = crate::fields::MetricField::Grid(g.clone()).node_derivatives(&g.grid, 0.0, 1)?;
        let pairs = packed_pairs(n);
        let per: Vec<(Vec<f64>, Vec<f64>)> = (0..g.grid.len())
            .into_par_iter()
            .map(|p| -> Result<(Vec<f64>, Vec<f64>)> {
                let conn = connection_with_threshold(&nodes.metric_jet(p), eps_pd)?;
                let inv: Vec<f64> = pairs.iter().map(|&(i, j)| conn.ginv[i * n + j]).collect();
                let c = (0..n)
                    .map(|k| {
                        let mut s = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                s += conn.ginv[i * n + j] * conn.gamma[(k * n + i) * n + j];
                            }
                        }
                        s
                    })
                    .collect();
                Ok((inv, c))
            })
            .collect::<Result<_>>()?;
        let ginv = (0..pairs.len()).map(|a| per.iter().map(|v| v.0[a]).collect()).collect();
        let contracted = (0..n).map(|k| per.iter().map(|v| v.1[k]).collect()).collect();
        Ok(LaplaceData { dim: n, ginv, contracted })
    }

    /// All arrays, packed inverse first.
    pub fn arrays(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.ginv.iter().chain(&self.contracted)
    }

    pub fn from_arrays(dim: usize, mut arrays: Vec<Vec<f64>>) -> Result<Self> {
        let np = dim * (dim + 1) / 2;
        if arrays.len() != np + dim {
            return Err(StarError::ShapeMismatch("Laplace data arrays".into()));
        }
        let contracted = arrays.split_off(np);
        Ok(LaplaceData { dim, ginv: arrays, contracted })
    }

    /// `|∇f|²` and `Δf` from spectral derivatives of `f`.
    pub fn apply(&self, f: &GridScalar) -> Result<ScalarCalculusGrid> {
        let n = self.dim;
        let pairs = packed_pairs(n);
        let mut alphas: Vec<Vec<u8>> = (0..n)
            .map(|i| {
                let mut a = vec![0u8; n];
                a[i] = 1;
                a
            })
            .collect();
        for &(i, j) in &pairs {
            let mut a = vec![0u8; n];
            a[i] += 1;
            a[j] += 1;
            alphas.push(a);
        }
        let d = f.spectrum().derivatives(&alphas)?;
        let len = f.data.len();
        let (grad_sq, laplacian) = (0..len)
            .into_par_iter()
            .map(|p| {
                let mut gs = 0.0;
                let mut lap = 0.0;
                for (a, &(i, j)) in pairs.iter().enumerate() {
                    let w = if i == j { 1.0 } else { 2.0 } * self.ginv[a][p];
                    gs += w * d[i][p] * d[j][p];
                    lap += w * d[n + a][p];
                }
                for k in 0..n {
                    lap -= self.contracted[k][p] * d[k][p];
                }
                (gs, lap)
            })
            .unzip();
        Ok(ScalarCalculusGrid { grad_sq, laplacian })
    }
}

/// `max_x Σ_ij |g^{ij}| k_i k_j`, the largest symbol of `−Δ` the grid resolves.
pub fn laplacian_spectral_radius(g: &GridMetric, eps_pd: f64) -> Result<f64> {
    let n = g.dim();
    let k: Vec<f64> = (0..n).map(|a| g.grid.max_wavenumber(a)).collect();
    let per: Vec<f64> = (0..g.grid.len())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let (inv, _) = crate::tensor::cholesky_inverse(n, &g.at(p), eps_pd)?;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += inv[i * n + j].abs() * k[i] * k[j];
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

/// `tr_g h` at every node.
pub fn trace_on_grid(g: &GridMetric, h: &GridMetric, eps_pd: f64) -> Result<Vec<f64>> {
    let n = g.dim();
    (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let (inv, _) = crate::tensor::cholesky_inverse(n, &g.at(p), eps_pd)?;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += inv[i * n + j] * h.comps[packed_index(n, i, j)][p];
                }
            }
            Ok(s)
        })
        .collect()
}
