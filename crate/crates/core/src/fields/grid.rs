use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::jet::{multi_indices, Jet, MAX_ORDER};

/// Computational domain: a flat periodic torus or a bounded analytic chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    /// Coordinate `x_i` is periodic with circumference `2π·radii[i]`.
    Torus { radii: Vec<f64> },
    AnalyticBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn torus(radii: &[f64]) -> Result<Self> {
        if radii.len() < 2 {
            return Err(StarError::InvalidArgument("dimension must be at least 2".into()));
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(StarError::InvalidArgument(format!("torus radii must be positive, got {radii:?}")));
        }
        Ok(Domain::Torus { radii: radii.to_vec() })
    }

    pub fn unit_torus(dim: usize) -> Self {
        Domain::Torus { radii: vec![1.0; dim] }
    }

    pub fn analytic_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 2 {
            return Err(StarError::InvalidArgument("box bounds must have equal length ≥ 2".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(StarError::InvalidArgument("box requires lo < hi on every axis".into()));
        }
        Ok(Domain::AnalyticBox { lo: lo.to_vec(), hi: hi.to_vec() })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Torus { radii } => radii.len(),
            Domain::AnalyticBox { lo, .. } => lo.len(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    pub fn radii(&self) -> Result<&[f64]> {
        match self {
            Domain::Torus { radii } => Ok(radii),
            Domain::AnalyticBox { .. } => Err(StarError::NotTorus),
        }
    }

    /// Torus points are always admissible (coordinates wrap); box points must lie inside.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(StarError::ShapeMismatch(format!("point of length {} in a {}-dimensional domain", x.len(), self.dim())));
        }
        if let Domain::AnalyticBox { lo, hi } = self {
            if x.iter().zip(lo.iter().zip(hi)).any(|(v, (a, b))| !(v >= a && v <= b)) {
                return Err(StarError::OutsideDomain { point: x.to_vec() });
            }
        }
        Ok(())
    }

    /// Coordinate volume of the domain.
    pub fn volume(&self) -> f64 {
        match self {
            Domain::Torus { radii } => radii.iter().map(|r| 2.0 * PI * r).product(),
            Domain::AnalyticBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }
}

struct GridInner {
    dim: usize,
    n: usize,
    radii: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform tensor-product grid on a torus, `n` points per axis, row-major
/// with axis 0 varying slowest. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("dim", &self.inner.dim).field("n", &self.inner.n).field("radii", &self.inner.radii).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.dim == other.inner.dim && self.inner.n == other.inner.n && self.inner.radii == other.inner.radii
    }
}

impl Grid {
    pub fn new(domain: &Domain, n: usize) -> Result<Self> {
        let radii = domain.radii()?.to_vec();
        if n < 2 || n % 2 != 0 {
            return Err(StarError::InvalidArgument(format!("grid resolution must be even and ≥ 2, got {n}")));
        }
        let dim = radii.len();
        if n.checked_pow(dim as u32).is_none() {
            return Err(StarError::InvalidArgument("grid too large".into()));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Grid { inner: Arc::new(GridInner { dim, n, radii, forward, inverse }) })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn radii(&self) -> &[f64] {
        &self.inner.radii
    }

    pub fn domain(&self) -> Domain {
        Domain::Torus { radii: self.inner.radii.clone() }
    }

    pub fn len(&self) -> usize {
        self.inner.n.pow(self.inner.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * PI * self.inner.radii[axis] / self.inner.n as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Stride of `axis` in the flat sample array.
    fn stride(&self, axis: usize) -> usize {
        self.inner.n.pow((self.inner.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut p: usize) -> Vec<usize> {
        let n = self.inner.n;
        let mut idx = vec![0; self.inner.dim];
        for a in (0..self.inner.dim).rev() {
            idx[a] = p % n;
            p /= n;
        }
        idx
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        self.multi_index(p).iter().enumerate().map(|(a, &i)| i as f64 * self.spacing(a)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    /// Signed integer wavenumber of FFT bin `j`; the Nyquist bin reports `+n/2`.
    fn wavenumber(&self, j: usize) -> i64 {
        let n = self.inner.n as i64;
        let j = j as i64;
        if j <= n / 2 { j } else { j - n }
    }

    /// Largest physical wavenumber magnitude per axis, `(n/2)/r`.
    pub fn max_wavenumber(&self, axis: usize) -> f64 {
        (self.inner.n / 2) as f64 / self.inner.radii[axis]
    }

    /// In-place 1-D transforms along every axis.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.inner.n;
        let plan = if inverse { &self.inner.inverse } else { &self.inner.forward };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let total = data.len();
        let mut lines = vec![Complex64::default(); total];
        for axis in 0..self.inner.dim {
            let s = self.stride(axis);
            if s == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * s;
            let mut q = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..s {
                    for k in 0..n {
                        lines[q + k] = data[outer + k * s + inner];
                    }
                    q += n;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut q = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..s {
                    for k in 0..n {
                        data[outer + k * s + inner] = lines[q + k];
                    }
                    q += n;
                }
            }
        }
    }

    pub fn forward(&self, samples: &[f64]) -> Result<Spectrum> {
        if samples.len() != self.len() {
            return Err(StarError::ShapeMismatch(format!("{} samples for a grid of {}", samples.len(), self.len())));
        }
        let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Ok(Spectrum { grid: self.clone(), coeffs: data })
    }

    /// Per-axis multiplier `(i k / r)^p`; odd orders drop the Nyquist bin.
    fn axis_factors(&self, axis: usize, p: u8) -> Vec<Complex64> {
        let n = self.inner.n;
        let r = self.inner.radii[axis];
        (0..n)
            .map(|j| {
                if p == 0 {
                    return Complex64::new(1.0, 0.0);
                }
                if j == n / 2 && p % 2 == 1 {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new(0.0, self.wavenumber(j) as f64 / r).powi(p as i32)
            })
            .collect()
    }

    fn multiplier(&self, alpha: &[u8]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(1.0, 0.0)];
        for (axis, &p) in alpha.iter().enumerate() {
            let f = self.axis_factors(axis, p);
            out = out.iter().flat_map(|&v| f.iter().map(move |&w| v * w)).collect();
        }
        out
    }
}

/// Discrete Fourier coefficients of a real grid field (unnormalized).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Spectral derivatives for each multi-index; two real outputs share one
    /// complex inverse transform.
    pub fn derivatives(&self, alphas: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
        let grid = &self.grid;
        for alpha in alphas {
            if alpha.len() != grid.dim() {
                return Err(StarError::ShapeMismatch("multi-index length".into()));
            }
            let order: usize = alpha.iter().map(|&a| a as usize).sum();
            if order > MAX_ORDER {
                return Err(StarError::UnsupportedOrder { requested: order, max: MAX_ORDER });
            }
        }
        let total = grid.len();
        let scale = 1.0 / total as f64;
        let mut out = vec![Vec::new(); alphas.len()];
        for (pair, chunk) in alphas.chunks(2).enumerate() {
            let m0 = grid.multiplier(&chunk[0]);
            let m1 = chunk.get(1).map(|a| grid.multiplier(a));
            let mut data: Vec<Complex64> = match &m1 {
                Some(m1) => (0..total)
                    .map(|p| self.coeffs[p] * m0[p] + Complex64::new(0.0, 1.0) * self.coeffs[p] * m1[p])
                    .collect(),
                None => (0..total).map(|p| self.coeffs[p] * m0[p]).collect(),
            };
            grid.transform(&mut data, true);
            out[2 * pair] = data.iter().map(|c| c.re * scale).collect();
            if m1.is_some() {
                out[2 * pair + 1] = data.iter().map(|c| c.im * scale).collect();
            }
        }
        Ok(out)
    }

    /// Derivative arrays for every multi-index of total order ≤ `order`, in
    /// jet coefficient order.
    pub fn all_derivatives(&self, order: usize) -> Result<Vec<Vec<f64>>> {
        let alphas = multi_indices(self.grid.dim(), order);
        self.derivatives(&alphas)
    }

    /// Trigonometric interpolant and its partials at an arbitrary point.
    pub fn eval_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let grid = &self.grid;
        let dim = grid.dim();
        if x.len() != dim {
            return Err(StarError::ShapeMismatch("point length".into()));
        }
        if order > MAX_ORDER {
            return Err(StarError::UnsupportedOrder { requested: order, max: MAX_ORDER });
        }
        let n = grid.n();
        let alphas = multi_indices(dim, order);
        let mut partials = Vec::with_capacity(alphas.len());
        let weights: Vec<Vec<Vec<Complex64>>> = (0..dim)
            .map(|a| (0..=order as u8).map(|p| interpolation_weights(grid, a, x[a], p)).collect())
            .collect();
        for alpha in &alphas {
            // Contract the last axis first, shrinking the array each time.
            let mut cur = self.coeffs.clone();
            for a in (0..dim).rev() {
                let w = &weights[a][alpha[a] as usize];
                let outer = cur.len() / n;
                cur = (0..outer)
                    .map(|o| (0..n).map(|j| cur[o * n + j] * w[j]).sum::<Complex64>())
                    .collect();
            }
            partials.push(cur[0].re / grid.len() as f64);
        }
        Ok(Jet::from_partials(dim, order, &partials))
    }
}

/// Weights `∂^p/∂x^p` of the 1-D basis functions; the Nyquist term is the
/// real `cos(k_N x)` so the interpolant stays real.
fn interpolation_weights(grid: &Grid, axis: usize, x: f64, p: u8) -> Vec<Complex64> {
    let n = grid.n();
    let r = grid.radii()[axis];
    (0..n)
        .map(|j| {
            let k = grid.wavenumber(j) as f64 / r;
            if j == n / 2 {
                let (s, c) = (k * x).sin_cos();
                let kp = k.powi(p as i32);
                let v = match p % 4 {
                    0 => c,
                    1 => -s,
                    2 => -c,
                    _ => s,
                };
                Complex64::new(kp * v, 0.0)
            } else {
                Complex64::new(0.0, k).powi(p as i32) * Complex64::from_polar(1.0, k * x)
            }
        })
        .collect()
}

/// Real scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridScalar {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl GridScalar {
    pub fn new(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(StarError::ShapeMismatch(format!("{} samples for a grid of {}", data.len(), grid.len())));
        }
        Ok(GridScalar { grid: grid.clone(), data })
    }

    pub fn sample(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.len()).map(|p| f(&grid.point(p))).collect();
        GridScalar { grid: grid.clone(), data }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        GridScalar { grid: grid.clone(), data: vec![c; grid.len()] }
    }

    pub fn spectrum(&self) -> Spectrum {
        self.grid.forward(&self.data).expect("length checked at construction")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `∂^α F` for a grid field on a torus.
pub fn spectral_derivative(field: &GridScalar, alpha: &[u8]) -> Result<GridScalar> {
    let mut out = field.spectrum().derivatives(&[alpha.to_vec()])?;
    Ok(GridScalar { grid: field.grid.clone(), data: out.pop().unwrap_or_default() })
}
