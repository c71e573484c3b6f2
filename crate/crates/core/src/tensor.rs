//! Pointwise multilinear algebra on a single tangent space.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, StarError};

/// Default positive-definiteness threshold on the smallest eigenvalue.
pub const EPS_PD: f64 = 1e-12;

/// Index position variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Raise,
    Lower,
}

/// A Riemannian metric at one point: symmetric, positive-definite, dense.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMetric {
    dim: usize,
    components: Vec<f64>,
    asymmetry: f64,
}

impl PointMetric {
    /// Symmetrizes `components` (row-major `dim × dim`), records the
    /// asymmetry magnitude and validates positive-definiteness.
    pub fn new(dim: usize, components: Vec<f64>) -> Result<Self> {
        Self::with_threshold(dim, components, EPS_PD)
    }

    pub fn with_threshold(dim: usize, mut components: Vec<f64>, eps_pd: f64) -> Result<Self> {
        if dim < 2 || components.len() != dim * dim {
            return Err(StarError::ShapeMismatch(format!(
                "metric needs {}×{} components, got {}",
                dim,
                dim,
                components.len()
            )));
        }
        let asymmetry = symmetrize(dim, &mut components);
        let min = min_eigenvalue(dim, &components);
        if !(min > eps_pd) {
            return Err(StarError::NonPositiveDefinite { min_eigenvalue: min });
        }
        Ok(PointMetric { dim, components, asymmetry })
    }

    pub fn identity(dim: usize) -> Self {
        let mut components = vec![0.0; dim * dim];
        for i in 0..dim {
            components[i * dim + i] = 1.0;
        }
        PointMetric { dim, components, asymmetry: 0.0 }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let dim = entries.len();
        let mut components = vec![0.0; dim * dim];
        for (i, &e) in entries.iter().enumerate() {
            components[i * dim + i] = e;
        }
        Self::new(dim, components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.components[i * self.dim + j]
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Max-norm of the antisymmetric part removed at construction.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn as_tensor(&self) -> PointTensor {
        PointTensor {
            dim: self.dim,
            slots: vec![Slot::Lower, Slot::Lower],
            components: self.components.clone(),
        }
    }
}

/// Replaces a square matrix by its symmetric part; returns the max-norm of
/// the removed antisymmetric part.
pub fn symmetrize(dim: usize, m: &mut [f64]) -> f64 {
    let mut asym: f64 = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let (a, b) = (m[i * dim + j], m[j * dim + i]);
            asym = asym.max(0.5 * (a - b).abs());
            let s = 0.5 * (a + b);
            m[i * dim + j] = s;
            m[j * dim + i] = s;
        }
    }
    asym
}

pub fn min_eigenvalue(dim: usize, m: &[f64]) -> f64 {
    let mat = DMatrix::from_row_slice(dim, dim, m);
    let eig = SymmetricEigen::new(mat);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// A tensor at one point with up to four indices of arbitrary variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTensor {
    dim: usize,
    slots: Vec<Slot>,
    components: Vec<f64>,
}

impl PointTensor {
    pub fn new(dim: usize, slots: Vec<Slot>, components: Vec<f64>) -> Result<Self> {
        if slots.len() > 4 {
            return Err(StarError::ShapeMismatch(format!("rank {} unsupported", slots.len())));
        }
        let expected = dim.pow(slots.len() as u32);
        if components.len() != expected {
            return Err(StarError::ShapeMismatch(format!(
                "rank-{} tensor in dimension {} needs {} components, got {}",
                slots.len(),
                dim,
                expected,
                components.len()
            )));
        }
        Ok(PointTensor { dim, slots, components })
    }

    pub fn covariant(dim: usize, components: Vec<f64>) -> Result<Self> {
        Self::new(dim, vec![Slot::Lower, Slot::Lower], components)
    }

    pub fn zeros(dim: usize, slots: Vec<Slot>) -> Self {
        let len = dim.pow(slots.len() as u32);
        PointTensor { dim, slots, components: vec![0.0; len] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn covariant_rank(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Lower).count()
    }

    pub fn contravariant_rank(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Upper).count()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.components[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Inverse and determinant of a positive-definite metric.
pub fn metric_inverse_det(g: &PointMetric) -> Result<(PointTensor, f64)> {
    let n = g.dim;
    let (inv, det) = cholesky_inverse(n, &g.components, EPS_PD)?;
    let inv = refine_inverse(n, &g.components, inv);
    Ok((PointTensor { dim: n, slots: vec![Slot::Upper, Slot::Upper], components: inv }, det))
}

/// One Newton–Schulz correction `X ← X + X(I − GX)` with the residual
/// accumulated in compensated (twice-working-precision) arithmetic.
fn refine_inverse(n: usize, g: &[f64], x: Vec<f64>) -> Vec<f64> {
    let mut resid = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (mut s, mut c) = (if i == j { 1.0 } else { 0.0 }, 0.0);
            for k in 0..n {
                let p = -g[i * n + k] * x[k * n + j];
                let perr = (-g[i * n + k]).mul_add(x[k * n + j], -p);
                let t = s + p;
                let z = t - s;
                c += (s - (t - z)) + (p - z) + perr;
                s = t;
            }
            resid[i * n + j] = s + c;
        }
    }
    let mut out = x.clone();
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += x[i * n + k] * resid[k * n + j];
            }
            out[i * n + j] += s;
        }
    }
    symmetrize(n, &mut out);
    out
}

/// Cholesky factorization `A = L Lᵀ` (lower, row-major); `None` when a pivot
/// is not strictly positive.
pub fn cholesky(n: usize, a: &[f64], shift: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j] - shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Inverse and determinant through Cholesky, failing with
/// `NonPositiveDefinite` when the smallest eigenvalue is `≤ eps_pd`.
pub fn cholesky_inverse(n: usize, a: &[f64], eps_pd: f64) -> Result<(Vec<f64>, f64)> {
    let not_pd = || StarError::NonPositiveDefinite { min_eigenvalue: min_eigenvalue(n, a) };
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StarError::NonFinite("metric components".into()));
    }
    cholesky(n, a, eps_pd).ok_or_else(not_pd)?;
    let l = cholesky(n, a, 0.0).ok_or_else(not_pd)?;
    let mut det = 1.0;
    for i in 0..n {
        det *= l[i * n + i] * l[i * n + i];
    }
    // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = vec![0.0; n * n];
    for j in 0..n {
        linv[j * n + j] = 1.0 / l[j * n + j];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = s / l[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in j..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok((inv, det))
}

/// Full metric contraction `⟨A,B⟩ = A_ij B_kl G^{ik} G^{jl}` of two covariant
/// 2-tensors. With `B = G` this is `tr_G A`.
pub fn contract_tensors(a: &PointTensor, b: &PointTensor, g: &PointMetric) -> Result<f64> {
    let n = g.dim;
    for t in [a, b] {
        if t.dim != n || t.slots != [Slot::Lower, Slot::Lower] {
            return Err(StarError::ShapeMismatch(
                "contraction expects covariant 2-tensors of the metric's dimension".into(),
            ));
        }
    }
    let (ginv, _) = metric_inverse_det(g)?;
    Ok(contract_raw(n, &a.components, &b.components, &ginv.components))
}

/// `A_ij B_kl G^{ik} G^{jl}` on raw row-major arrays.
pub fn contract_raw(n: usize, a: &[f64], b: &[f64], ginv: &[f64]) -> f64 {
    // B^{ij} = G^{ik} B_kl G^{lj}
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += ginv[i * n + k] * b[k * n + l];
            }
            tmp[i * n + l] = s;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut bij = 0.0;
            for l in 0..n {
                bij += tmp[i * n + l] * ginv[l * n + j];
            }
            total += a[i * n + j] * bij;
        }
    }
    total
}

/// Raises or lowers one index slot with the metric.
pub fn raise_lower(
    a: &PointTensor,
    slot: usize,
    direction: Direction,
    g: &PointMetric,
) -> Result<PointTensor> {
    let rank = a.rank();
    if slot >= rank {
        return Err(StarError::InvalidSlot { slot, rank });
    }
    if a.dim != g.dim {
        return Err(StarError::ShapeMismatch("tensor and metric dimensions differ".into()));
    }
    let (want, becomes) = match direction {
        Direction::Raise => (Slot::Lower, Slot::Upper),
        Direction::Lower => (Slot::Upper, Slot::Lower),
    };
    if a.slots[slot] != want {
        return Err(StarError::InvalidSlot { slot, rank });
    }
    let n = a.dim;
    let mat: Vec<f64> = match direction {
        Direction::Raise => metric_inverse_det(g)?.0.components,
        Direction::Lower => g.components.clone(),
    };
    let stride = n.pow((rank - 1 - slot) as u32);
    let mut out = vec![0.0; a.components.len()];
    for (pos, o) in out.iter_mut().enumerate() {
        let i = (pos / stride) % n;
        let base = pos - i * stride;
        let mut s = 0.0;
        for k in 0..n {
            s += mat[i * n + k] * a.components[base + k * stride];
        }
        *o = s;
    }
    let mut slots = a.slots.clone();
    slots[slot] = becomes;
    Ok(PointTensor { dim: n, slots, components: out })
}
