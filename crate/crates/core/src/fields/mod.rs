//! Smooth fields on the computational domains.
//!
//! Two backends: closed-form expressions (derivatives by jet arithmetic) and
//! periodic grid samples (derivatives by FFT). Quantities needed at every
//! grid node are gathered into [`NodeDerivatives`] arrays so pointwise
//! geometry runs the same way over either backend.

mod grid;
mod richardson;
pub mod snapshot;

pub use grid::{spectral_derivative, Domain, Grid, GridScalar, Spectrum};
pub use richardson::{default_step, richardson_time_derivative, richardson_vector, RichardsonEstimate, DEFAULT_LEVELS};

use rayon::prelude::*;

use crate::curvature::MetricJet;
use crate::error::{Result, StarError};
use crate::expr::Expr;
use crate::jet::{multi_index_position, multi_indices, Jet, MAX_ORDER};
use crate::tensor::cholesky;

/// Index of `(i, j)` in packed upper-triangular storage (row-major, `i ≤ j`).
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(i, j)` pairs in packed order.
pub fn packed_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

/// All partials up to `order` at every node: `arrays[alpha][node]`, with
/// `alpha` in jet coefficient order.
#[derive(Clone, Debug)]
pub struct NodeDerivatives {
    pub dim: usize,
    pub order: usize,
    pub arrays: Vec<Vec<f64>>,
}

impl NodeDerivatives {
    pub fn values(&self) -> &[f64] {
        &self.arrays[0]
    }

    /// `∂_i` at every node.
    pub fn first(&self, i: usize) -> &[f64] {
        &self.arrays[1 + i]
    }

    /// `∂_i∂_j` at every node.
    pub fn second(&self, i: usize, j: usize) -> &[f64] {
        let mut alpha = vec![0u8; self.dim];
        alpha[i] += 1;
        alpha[j] += 1;
        &self.arrays[multi_index_position(self.dim, &alpha).expect("order-2 index")]
    }

    pub fn partial(&self, alpha: &[u8]) -> Option<&[f64]> {
        multi_index_position(self.dim, alpha).filter(|&k| k < self.arrays.len()).map(|k| self.arrays[k].as_slice())
    }

    /// Jet of the stored partials at one node.
    pub fn jet(&self, node: usize) -> Jet {
        let partials: Vec<f64> = self.arrays.iter().map(|a| a[node]).collect();
        Jet::from_partials(self.dim, self.order, &partials)
    }

    fn from_node_jets(dim: usize, order: usize, jets: &[Jet]) -> Self {
        let alphas = multi_indices(dim, order);
        let arrays = alphas.iter().map(|alpha| jets.iter().map(|j| j.partial(alpha)).collect()).collect();
        NodeDerivatives { dim, order, arrays }
    }

    fn from_grid(field: &GridScalar, order: usize) -> Result<Self> {
        let arrays = field.spectrum().all_derivatives(order)?;
        Ok(NodeDerivatives { dim: field.grid.dim(), order, arrays })
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(StarError::UnsupportedOrder { requested: order, max: MAX_ORDER });
    }
    Ok(())
}

fn expr_node_derivatives(e: &Expr, grid: &Grid, t: f64, order: usize) -> NodeDerivatives {
    let jets: Vec<Jet> = (0..grid.len()).into_par_iter().map(|p| e.spatial_jet(&grid.point(p), t, order)).collect();
    NodeDerivatives::from_node_jets(grid.dim(), order, &jets)
}

fn expr_node_values(e: &Expr, grid: &Grid, t: f64) -> Vec<f64> {
    (0..grid.len()).into_par_iter().map(|p| e.value(&grid.point(p), t)).collect()
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(StarError::ShapeMismatch("fields live on different grids".into()));
    }
    Ok(())
}

/// Scalar function, possibly time dependent (analytic backend only).
#[derive(Clone, Debug)]
pub enum ScalarField {
    Analytic(Expr),
    Grid(GridScalar),
}

impl ScalarField {
    pub fn analytic(e: Expr) -> Self {
        ScalarField::Analytic(e)
    }

    /// Value and partials up to `order` at `x`.
    pub fn eval_jet(&self, domain: &Domain, x: &[f64], t: f64, order: usize) -> Result<Jet> {
        check_order(order)?;
        domain.check_point(x)?;
        match self {
            ScalarField::Analytic(e) => Ok(e.spatial_jet(x, t, order)),
            ScalarField::Grid(g) => g.spectrum().eval_jet(x, order),
        }
    }

    pub fn node_derivatives(&self, grid: &Grid, t: f64, order: usize) -> Result<NodeDerivatives> {
        check_order(order)?;
        match self {
            ScalarField::Analytic(e) => Ok(expr_node_derivatives(e, grid, t, order)),
            ScalarField::Grid(g) => {
                same_grid(&g.grid, grid)?;
                NodeDerivatives::from_grid(g, order)
            }
        }
    }

    pub fn node_values(&self, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        match self {
            ScalarField::Analytic(e) => Ok(expr_node_values(e, grid, t)),
            ScalarField::Grid(g) => {
                same_grid(&g.grid, grid)?;
                Ok(g.data.clone())
            }
        }
    }

    pub fn to_grid(&self, grid: &Grid, t: f64) -> Result<GridScalar> {
        GridScalar::new(grid, self.node_values(grid, t)?)
    }
}

/// Vector field `V = V^i ∂_i`.
#[derive(Clone, Debug)]
pub enum VectorField {
    Analytic(Vec<Expr>),
    Grid(Vec<GridScalar>),
}

impl VectorField {
    pub fn zero(dim: usize) -> Self {
        VectorField::Analytic(vec![Expr::c(0.0); dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Analytic(c) => c.len(),
            VectorField::Grid(c) => c.len(),
        }
    }

    pub fn eval_jets(&self, domain: &Domain, x: &[f64], t: f64, order: usize) -> Result<Vec<Jet>> {
        check_order(order)?;
        domain.check_point(x)?;
        match self {
            VectorField::Analytic(c) => Ok(c.iter().map(|e| e.spatial_jet(x, t, order)).collect()),
            VectorField::Grid(c) => c.iter().map(|g| g.spectrum().eval_jet(x, order)).collect(),
        }
    }

    pub fn node_derivatives(&self, grid: &Grid, t: f64, order: usize) -> Result<Vec<NodeDerivatives>> {
        check_order(order)?;
        match self {
            VectorField::Analytic(c) => Ok(c.iter().map(|e| expr_node_derivatives(e, grid, t, order)).collect()),
            VectorField::Grid(c) => c
                .iter()
                .map(|g| {
                    same_grid(&g.grid, grid)?;
                    NodeDerivatives::from_grid(g, order)
                })
                .collect(),
        }
    }
}

/// Samples of a symmetric 2-tensor field in packed upper-triangular storage.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMetric {
    pub grid: Grid,
    /// `comps[packed_index(n,i,j)][node]`
    pub comps: Vec<Vec<f64>>,
}

impl GridMetric {
    pub fn new(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.dim();
        if comps.len() != packed_len(n) || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(StarError::ShapeMismatch("packed metric components".into()));
        }
        Ok(GridMetric { grid: grid.clone(), comps })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridMetric { grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; packed_len(grid.dim())] }
    }

    /// Full `n×n` matrix at one node.
    pub fn at(&self, node: usize) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.comps[packed_index(n, i, j)][node];
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a·self + b·other`, componentwise.
    pub fn axpby(&self, a: f64, other: &GridMetric, b: f64) -> GridMetric {
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        GridMetric { grid: self.grid.clone(), comps }
    }

    /// Largest componentwise difference.
    pub fn max_diff(&self, other: &GridMetric) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }
}

/// Symmetric 2-tensor field; used for metrics and for their variations
/// (positivity is checked where a metric is required, not on construction).
#[derive(Clone, Debug)]
pub enum MetricField {
    /// Full `n×n` component expressions, symmetric.
    Analytic { dim: usize, comps: Vec<Expr> },
    Grid(GridMetric),
}

impl MetricField {
    pub fn analytic(dim: usize, comps: Vec<Expr>) -> Result<Self> {
        if comps.len() != dim * dim {
            return Err(StarError::ShapeMismatch(format!("{} metric components for dimension {dim}", comps.len())));
        }
        Ok(MetricField::Analytic { dim, comps })
    }

    /// Diagonal metric from expressions.
    pub fn diagonal(entries: Vec<Expr>) -> Self {
        let n = entries.len();
        let mut comps = vec![Expr::c(0.0); n * n];
        for (i, e) in entries.into_iter().enumerate() {
            comps[i * n + i] = e;
        }
        MetricField::Analytic { dim: n, comps }
    }

    pub fn flat(dim: usize) -> Self {
        MetricField::diagonal(vec![Expr::c(1.0); dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricField::Analytic { dim, .. } => *dim,
            MetricField::Grid(g) => g.dim(),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            MetricField::Analytic { comps, .. } => comps.iter().any(|e| e.depends_on_time()),
            MetricField::Grid(_) => false,
        }
    }

    /// Full `n×n` component jets at `x`.
    pub fn eval_jets(&self, domain: &Domain, x: &[f64], t: f64, order: usize) -> Result<Vec<Jet>> {
        check_order(order)?;
        domain.check_point(x)?;
        let n = self.dim();
        match self {
            MetricField::Analytic { comps, .. } => Ok(comps.iter().map(|e| e.spatial_jet(x, t, order)).collect()),
            MetricField::Grid(g) => {
                let packed: Vec<Jet> = g
                    .comps
                    .iter()
                    .map(|c| g.grid.forward(c)?.eval_jet(x, order))
                    .collect::<Result<_>>()?;
                Ok((0..n * n).map(|ij| packed[packed_index(n, ij / n, ij % n)].clone()).collect())
            }
        }
    }

    pub fn metric_jet(&self, domain: &Domain, x: &[f64], t: f64, order: usize) -> Result<MetricJet<Jet>> {
        MetricJet::from_jets(self.dim(), self.eval_jets(domain, x, t, order)?)
    }

    /// Partials of each packed component at every node.
    pub fn node_derivatives(&self, grid: &Grid, t: f64, order: usize) -> Result<MetricNodes> {
        check_order(order)?;
        let n = self.dim();
        let comps = match self {
            MetricField::Analytic { comps, .. } => packed_pairs(n)
                .iter()
                .map(|&(i, j)| expr_node_derivatives(&comps[i * n + j], grid, t, order))
                .collect(),
            MetricField::Grid(g) => {
                same_grid(&g.grid, grid)?;
                g.comps
                    .iter()
                    .map(|c| Ok(NodeDerivatives { dim: n, order, arrays: grid.forward(c)?.all_derivatives(order)? }))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(MetricNodes::new(n, order, comps))
    }

    pub fn to_grid(&self, grid: &Grid, t: f64) -> Result<GridMetric> {
        match self {
            MetricField::Analytic { comps, .. } => {
                let n = self.dim();
                let packed = packed_pairs(n).iter().map(|&(i, j)| expr_node_values(&comps[i * n + j], grid, t)).collect();
                GridMetric::new(grid, packed)
            }
            MetricField::Grid(g) => {
                same_grid(&g.grid, grid)?;
                Ok(g.clone())
            }
        }
    }
}

/// Packed metric partials at every node.
#[derive(Clone, Debug)]
pub struct MetricNodes {
    pub dim: usize,
    pub order: usize,
    pub comps: Vec<NodeDerivatives>,
    /// Array position of `∂_k∂_l` for `k*n+l`.
    second: Vec<usize>,
}

impl MetricNodes {
    pub fn new(dim: usize, order: usize, comps: Vec<NodeDerivatives>) -> Self {
        let second = if order >= 2 {
            (0..dim * dim)
                .map(|kl| {
                    let mut alpha = vec![0u8; dim];
                    alpha[kl / dim] += 1;
                    alpha[kl % dim] += 1;
                    multi_index_position(dim, &alpha).expect("order-2 index")
                })
                .collect()
        } else {
            Vec::new()
        };
        MetricNodes { dim, order, comps, second }
    }

    pub fn value(&self, node: usize, i: usize, j: usize) -> f64 {
        self.comps[packed_index(self.dim, i, j)].arrays[0][node]
    }

    /// `∂_k g_ij` at a node.
    pub fn first(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        self.comps[packed_index(self.dim, i, j)].arrays[1 + k][node]
    }

    /// `∂_k∂_l g_ij` at a node (order ≥ 2 required).
    pub fn second(&self, node: usize, k: usize, l: usize, i: usize, j: usize) -> f64 {
        self.comps[packed_index(self.dim, i, j)].arrays[self.second[k * self.dim + l]][node]
    }

    pub fn values_at(&self, node: usize) -> Vec<f64> {
        let n = self.dim;
        (0..n * n).map(|ij| self.value(node, ij / n, ij % n)).collect()
    }

    /// `f64` metric jet (values, first and, when available, second partials).
    pub fn metric_jet(&self, node: usize) -> MetricJet<f64> {
        let n = self.dim;
        let c = |i: usize, j: usize| &self.comps[packed_index(n, i, j)];
        let g = self.values_at(node);
        let mut dg = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    dg.push(if self.order >= 1 { c(i, j).first(k)[node] } else { 0.0 });
                }
            }
        }
        let mut ddg = Vec::new();
        if self.order >= 2 {
            ddg.reserve(n * n * n * n);
            for k in 0..n {
                for l in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            ddg.push(c(i, j).arrays[self.second[k * n + l]][node]);
                        }
                    }
                }
            }
        }
        MetricJet { dim: n, g, dg, ddg }
    }

    /// Full component jets at one node.
    pub fn jets(&self, node: usize) -> Vec<Jet> {
        let n = self.dim;
        let packed: Vec<Jet> = self.comps.iter().map(|c| c.jet(node)).collect();
        (0..n * n).map(|ij| packed[packed_index(n, ij / n, ij % n)].clone()).collect()
    }
}

/// The (1,1)-tensor `φ`, stored `φ[i*n+j] = φ^i_j`.
#[derive(Clone, Debug)]
pub enum PhiField {
    Analytic { dim: usize, comps: Vec<Expr> },
    Grid { dim: usize, comps: Vec<GridScalar> },
}

impl PhiField {
    pub fn analytic(dim: usize, comps: Vec<Expr>) -> Result<Self> {
        if comps.len() != dim * dim {
            return Err(StarError::ShapeMismatch(format!("{} φ components for dimension {dim}", comps.len())));
        }
        Ok(PhiField::Analytic { dim, comps })
    }

    pub fn zero(dim: usize) -> Self {
        PhiField::Analytic { dim, comps: vec![Expr::c(0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let comps = (0..dim * dim).map(|ij| Expr::c(if ij / dim == ij % dim { 1.0 } else { 0.0 })).collect();
        PhiField::Analytic { dim, comps }
    }

    pub fn dim(&self) -> usize {
        match self {
            PhiField::Analytic { dim, .. } | PhiField::Grid { dim, .. } => *dim,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PhiField::Analytic { comps, .. } => comps.iter().all(|e| e.is_zero()),
            PhiField::Grid { comps, .. } => comps.iter().all(|c| c.data.iter().all(|&v| v == 0.0)),
        }
    }

    pub fn eval_jets(&self, domain: &Domain, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        check_order(order)?;
        domain.check_point(x)?;
        match self {
            PhiField::Analytic { comps, .. } => Ok(comps.iter().map(|e| e.spatial_jet(x, 0.0, order)).collect()),
            PhiField::Grid { comps, .. } => comps.iter().map(|g| g.spectrum().eval_jet(x, order)).collect(),
        }
    }

    /// `φ` values at every node, `[node][i*n+j]`.
    pub fn node_values(&self, grid: &Grid) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let per_comp: Vec<Vec<f64>> = match self {
            PhiField::Analytic { comps, .. } => comps.iter().map(|e| expr_node_values(e, grid, 0.0)).collect(),
            PhiField::Grid { comps, .. } => comps
                .iter()
                .map(|c| {
                    same_grid(&c.grid, grid)?;
                    Ok(c.data.clone())
                })
                .collect::<Result<_>>()?,
        };
        Ok((0..grid.len()).map(|p| (0..n * n).map(|ij| per_comp[ij][p]).collect()).collect())
    }
}

/// `Σ a_i` by recursive halving; the association order depends only on the length.
pub fn pairwise_sum(a: &[f64]) -> f64 {
    if a.len() <= 8 {
        return a.iter().sum();
    }
    let mid = a.len() / 2;
    pairwise_sum(&a[..mid]) + pairwise_sum(&a[mid..])
}

/// `√det g` at every node; fails on a non-positive-definite node.
pub fn volume_density(g: &GridMetric, eps_pd: f64) -> Result<Vec<f64>> {
    let n = g.dim();
    (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let m = g.at(p);
            let not_pd = || StarError::NonPositiveDefinite { min_eigenvalue: crate::tensor::min_eigenvalue(n, &m) };
            cholesky(n, &m, eps_pd).ok_or_else(not_pd)?;
            let l = cholesky(n, &m, 0.0).ok_or_else(not_pd)?;
            Ok((0..n).map(|i| l[i * n + i]).product::<f64>())
        })
        .collect()
}

/// `∫ s dV_g ≈ Σ s·√det g·cell volume`, pairwise-summed.
pub fn integrate_over_torus(s: &[f64], g: &GridMetric) -> Result<f64> {
    if s.len() != g.grid.len() {
        return Err(StarError::ShapeMismatch("integrand length".into()));
    }
    let density = volume_density(g, crate::tensor::EPS_PD)?;
    Ok(integrate_with_density(s, &density, &g.grid))
}

/// Quadrature with a precomputed `√det g`.
pub fn integrate_with_density(s: &[f64], density: &[f64], grid: &Grid) -> f64 {
    let w: Vec<f64> = s.iter().zip(density).map(|(a, b)| a * b).collect();
    pairwise_sum(&w) * grid.cell_volume()
}

/// [`integrate_over_torus`] for fields on either backend.
pub fn integrate_field(grid: &Grid, s: &ScalarField, g: &MetricField, t: f64) -> Result<f64> {
    integrate_over_torus(&s.node_values(grid, t)?, &g.to_grid(grid, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::jet::Scalar;

    #[test]
    fn packed_indices_cover_upper_triangle() {
        for n in 2..6 {
            let pairs = packed_pairs(n);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                assert_eq!(packed_index(n, i, j), k);
                assert_eq!(packed_index(n, j, i), k);
            }
            assert_eq!(pairs.len(), packed_len(n));
        }
    }

    #[test]
    fn cosine_jet_closed_forms() {
        let d = Domain::unit_torus(3);
        let f = ScalarField::analytic(Expr::x(0).cos());
        let j = f.eval_jet(&d, &[0.0; 3], 0.0, 2).unwrap();
        assert_eq!(j.value(), 1.0);
        assert_eq!(j.d1(0), 0.0);
        assert_eq!(j.partial(&[2, 0, 0]), -1.0);
        let s = ScalarField::analytic(Expr::x(0).sin()).eval_jet(&d, &[0.0; 3], 0.0, 4).unwrap();
        assert!((s.partial(&[3, 0, 0]) + 1.0).abs() < 1e-15);
        assert_eq!(s.partial(&[4, 0, 0]), 0.0);
    }

    #[test]
    fn jet_errors() {
        let b = Domain::analytic_box(&[-1.0; 3], &[1.0; 3]).unwrap();
        let f = ScalarField::analytic(Expr::x(0));
        assert!(matches!(f.eval_jet(&b, &[2.0, 0.0, 0.0], 0.0, 1), Err(StarError::OutsideDomain { .. })));
        assert!(matches!(f.eval_jet(&b, &[0.0; 3], 0.0, 5), Err(StarError::UnsupportedOrder { .. })));
    }

    #[test]
    fn flat_volume_and_odd_mode() {
        let grid = Grid::new(&Domain::unit_torus(3), 16).unwrap();
        let g = MetricField::flat(3);
        let vol = integrate_field(&grid, &ScalarField::analytic(Expr::c(1.0)), &g, 0.0).unwrap();
        assert!((vol - (2.0 * PI).powi(3)).abs() < 1e-11);
        let odd = integrate_field(&grid, &ScalarField::analytic(Expr::x(0).sin()), &g, 0.0).unwrap();
        assert!(odd.abs() < 1e-13);
    }

    #[test]
    fn degenerate_node_is_reported() {
        let grid = Grid::new(&Domain::unit_torus(2), 8).unwrap();
        let g = MetricField::diagonal(vec![Expr::c(1.0), Expr::x(0).sin()]);
        let r = integrate_field(&grid, &ScalarField::analytic(Expr::c(1.0)), &g, 0.0);
        assert!(matches!(r, Err(StarError::NonPositiveDefinite { .. })));
    }

    #[test]
    fn grid_and_analytic_metric_nodes_agree() {
        let grid = Grid::new(&Domain::unit_torus(3), 32).unwrap();
        let g = MetricField::diagonal(vec![Expr::c(1.0), Expr::c(1.0), (Expr::x(0).sin() * 0.6).exp()]);
        let a = g.node_derivatives(&grid, 0.0, 2).unwrap();
        let s = MetricField::Grid(g.to_grid(&grid, 0.0).unwrap()).node_derivatives(&grid, 0.0, 2).unwrap();
        for p in [0, 17, 333, 4000] {
            let (ma, ms) = (a.metric_jet(p), s.metric_jet(p));
            for (x, y) in ma.dg.iter().zip(&ms.dg).chain(ma.ddg.iter().zip(&ms.ddg)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
