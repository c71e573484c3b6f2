//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(x₀) / α!` of a function of
//! `nvars` variables for every multi-index `|α| ≤ order`, laid out in graded
//! lexicographic order so that the coefficients up to any lower order form a
//! prefix. Arithmetic truncates to the smaller order of its operands, which
//! makes nested forward-mode differentiation exact to roundoff up to
//! [`MAX_ORDER`].
//!
//! The [`Scalar`] trait abstracts over `f64` and `Jet` so that the geometry
//! formulas are written once and evaluated either on plain values (grid hot
//! paths) or on jets (whenever derivatives of derived quantities are needed).

use std::fmt;
use std::sync::OnceLock;

/// Highest derivative order carried by a jet.
pub const MAX_ORDER: usize = 4;
/// Largest number of independent variables supported.
pub const MAX_VARS: usize = 6;

struct Table {
    exps: Vec<[u8; MAX_VARS]>,
    /// Number of monomials of total degree `≤ k`.
    count: [usize; MAX_ORDER + 1],
    /// `(a, b, c)` with `m_a + m_b = m_c`, sorted by `deg(m_c)`.
    prod: Vec<(u16, u16, u16)>,
    prod_count: [usize; MAX_ORDER + 1],
    /// `shift[i][m]` is the index of `m + e_i` for `deg(m) < MAX_ORDER`.
    shift: Vec<Vec<u16>>,
}

fn degree(e: &[u8; MAX_VARS]) -> usize {
    e.iter().map(|&v| v as usize).sum()
}

impl Table {
    fn build(nvars: usize) -> Self {
        let mut exps: Vec<[u8; MAX_VARS]> = Vec::new();
        let mut count = [0usize; MAX_ORDER + 1];
        for deg in 0..=MAX_ORDER {
            let mut cur = [0u8; MAX_VARS];
            push_degree(nvars, 0, deg, &mut cur, &mut exps);
            count[deg] = exps.len();
        }
        let find = |e: &[u8; MAX_VARS]| exps.iter().position(|x| x == e);

        let mut prod = Vec::new();
        let mut prod_count = [0usize; MAX_ORDER + 1];
        for deg in 0..=MAX_ORDER {
            for (c, ec) in exps.iter().enumerate() {
                if degree(ec) != deg {
                    continue;
                }
                for (a, ea) in exps.iter().enumerate() {
                    if (0..MAX_VARS).all(|v| ea[v] <= ec[v]) {
                        let mut eb = *ec;
                        for v in 0..MAX_VARS {
                            eb[v] -= ea[v];
                        }
                        let b = find(&eb).expect("complement monomial exists");
                        prod.push((a as u16, b as u16, c as u16));
                    }
                }
            }
            prod_count[deg] = prod.len();
        }

        let mut shift = Vec::with_capacity(nvars);
        for i in 0..nvars {
            let row = exps[..count[MAX_ORDER - 1]]
                .iter()
                .map(|e| {
                    let mut s = *e;
                    s[i] += 1;
                    find(&s).expect("shifted monomial exists") as u16
                })
                .collect();
            shift.push(row);
        }
        Table { exps, count, prod, prod_count, shift }
    }
}

fn push_degree(
    nvars: usize,
    var: usize,
    remaining: usize,
    cur: &mut [u8; MAX_VARS],
    out: &mut Vec<[u8; MAX_VARS]>,
) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(*cur);
        }
        return;
    }
    if var == nvars - 1 {
        cur[var] = remaining as u8;
        out.push(*cur);
        cur[var] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[var] = k as u8;
        push_degree(nvars, var + 1, remaining - k, cur, out);
    }
    cur[var] = 0;
}

fn table(nvars: usize) -> &'static Table {
    static TABLES: OnceLock<Vec<Table>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| (0..=MAX_VARS).map(Table::build).collect());
    &tables[nvars]
}

/// Number of Taylor coefficients of a jet in `nvars` variables up to `order`.
pub fn coefficient_count(nvars: usize, order: usize) -> usize {
    table(nvars).count[order]
}

/// Multi-indices of total degree `≤ order`, in the storage order of [`Jet`].
pub fn multi_indices(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    let t = table(nvars);
    t.exps[..t.count[order]]
        .iter()
        .map(|e| e[..nvars].to_vec())
        .collect()
}

/// Storage index of a multi-index.
pub fn multi_index_position(nvars: usize, alpha: &[u8]) -> Option<usize> {
    let mut e = [0u8; MAX_VARS];
    e[..nvars].copy_from_slice(&alpha[..nvars]);
    table(nvars).exps.iter().position(|x| *x == e)
}

/// `α!` for a multi-index.
pub fn multi_factorial(alpha: &[u8]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a as u32).product::<u32>() as f64)
        .product()
}

/// Truncated Taylor expansion of a smooth function about a point.
#[derive(Clone, PartialEq)]
pub struct Jet {
    nvars: u8,
    order: u8,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    /// Constant jet. Constants carry the maximal order since all their
    /// derivatives are known exactly.
    pub fn constant(nvars: usize, value: f64) -> Self {
        assert!(nvars <= MAX_VARS, "at most {MAX_VARS} jet variables");
        let mut coeffs = vec![0.0; coefficient_count(nvars, MAX_ORDER)];
        coeffs[0] = value;
        Jet { nvars: nvars as u8, order: MAX_ORDER as u8, coeffs }
    }

    /// The coordinate function `x_var` expanded about `value`.
    pub fn variable(nvars: usize, var: usize, value: f64, order: usize) -> Self {
        assert!(var < nvars && order <= MAX_ORDER);
        let mut coeffs = vec![0.0; coefficient_count(nvars, order)];
        coeffs[0] = value;
        if order >= 1 {
            coeffs[1 + var] = 1.0;
        }
        Jet { nvars: nvars as u8, order: order as u8, coeffs }
    }

    /// Jet from Taylor coefficients in storage order.
    pub fn from_taylor(nvars: usize, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), coefficient_count(nvars, order));
        Jet { nvars: nvars as u8, order: order as u8, coeffs }
    }

    /// Jet from partial derivatives `∂^α f` given in storage order.
    pub fn from_partials(nvars: usize, order: usize, partials: &[f64]) -> Self {
        let t = table(nvars);
        let coeffs = t.exps[..t.count[order]]
            .iter()
            .zip(partials)
            .map(|(e, &p)| p / multi_factorial(&e[..nvars]))
            .collect();
        Jet { nvars: nvars as u8, order: order as u8, coeffs }
    }

    pub fn nvars(&self) -> usize {
        self.nvars as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn taylor(&self) -> &[f64] {
        &self.coeffs
    }

    /// Partial derivative `∂^α f(x₀)`; zero for multi-indices beyond the order.
    pub fn partial(&self, alpha: &[u8]) -> f64 {
        let deg: usize = alpha.iter().map(|&a| a as usize).sum();
        if deg > self.order() {
            return 0.0;
        }
        let pos = multi_index_position(self.nvars(), alpha).expect("valid multi-index");
        self.coeffs[pos] * multi_factorial(alpha)
    }

    /// Gradient entry `∂_i f(x₀)`.
    pub fn d1(&self, i: usize) -> f64 {
        if self.order == 0 {
            0.0
        } else {
            self.coeffs[1 + i]
        }
    }

    /// Drops all coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        Jet {
            nvars: self.nvars,
            order: order as u8,
            coeffs: self.coeffs[..coefficient_count(self.nvars(), order)].to_vec(),
        }
    }

    /// Partial derivative `∂_i` as a jet of one lower order.
    ///
    /// Panics on an order-zero jet; callers check orders up front.
    pub fn deriv(&self, i: usize) -> Jet {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let t = table(self.nvars());
        let r = self.order() - 1;
        let coeffs = t.exps[..t.count[r]]
            .iter()
            .enumerate()
            .map(|(m, e)| (e[i] as f64 + 1.0) * self.coeffs[t.shift[i][m] as usize])
            .collect();
        Jet { nvars: self.nvars, order: r as u8, coeffs }
    }

    fn binary(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert_eq!(self.nvars, other.nvars);
        let order = self.order.min(other.order);
        let len = coefficient_count(self.nvars(), order as usize);
        let coeffs = self.coeffs[..len]
            .iter()
            .zip(&other.coeffs[..len])
            .map(|(&a, &b)| f(a, b))
            .collect();
        Jet { nvars: self.nvars, order, coeffs }
    }

    fn product(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.nvars, other.nvars);
        let order = self.order.min(other.order) as usize;
        let t = table(self.nvars());
        let mut coeffs = vec![0.0; t.count[order]];
        for &(a, b, c) in &t.prod[..t.prod_count[order]] {
            coeffs[c as usize] += self.coeffs[a as usize] * other.coeffs[b as usize];
        }
        Jet { nvars: self.nvars, order: order as u8, coeffs }
    }

    /// `g(self)` for a univariate `g` given by its Taylor coefficients
    /// `g^{(m)}(a)/m!` at the constant part `a`.
    fn compose(&self, taylor: &[f64; MAX_ORDER + 1]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let order = self.order();
        let mut acc = Jet::constant(self.nvars(), taylor[order]).truncate(order);
        for m in (0..order).rev() {
            acc = acc.product(&delta);
            acc.coeffs[0] += taylor[m];
        }
        acc
    }
}

/// Ring-and-elementary-function interface shared by `f64` and [`Jet`].
pub trait Scalar: Clone + Send + Sync + fmt::Debug {
    /// A constant living in the same space as `self`.
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    /// Truncation order; `0` for plain values.
    fn jet_order(&self) -> usize;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn scaled(&self, s: f64) -> Self;
    fn shifted(&self, c: f64) -> Self;
    /// `self += s·a`.
    fn acc1(&mut self, s: f64, a: &Self);
    /// `self += s·a·b`.
    fn acc2(&mut self, s: f64, a: &Self, b: &Self);
    fn recip(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, k: i32) -> Self;

    fn negated(&self) -> Self {
        self.scaled(-1.0)
    }
    fn divide(&self, o: &Self) -> Self {
        self.times(&o.recip())
    }
    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn jet_order(&self) -> usize {
        0
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, s: f64) -> Self {
        self * s
    }
    fn shifted(&self, c: f64) -> Self {
        self + c
    }
    fn acc1(&mut self, s: f64, a: &Self) {
        *self += s * a;
    }
    fn acc2(&mut self, s: f64, a: &Self, b: &Self) {
        *self += s * a * b;
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

impl Scalar for Jet {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(self.nvars(), c)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn jet_order(&self) -> usize {
        self.order()
    }
    fn plus(&self, o: &Self) -> Self {
        self.binary(o, |a, b| a + b)
    }
    fn minus(&self, o: &Self) -> Self {
        self.binary(o, |a, b| a - b)
    }
    fn times(&self, o: &Self) -> Self {
        self.product(o)
    }
    fn scaled(&self, s: f64) -> Self {
        Jet {
            nvars: self.nvars,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
    fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }
    fn acc1(&mut self, s: f64, a: &Self) {
        let order = self.order.min(a.order);
        let len = coefficient_count(self.nvars(), order as usize);
        self.coeffs.truncate(len);
        self.order = order;
        for (x, y) in self.coeffs.iter_mut().zip(&a.coeffs) {
            *x += s * y;
        }
    }
    fn acc2(&mut self, s: f64, a: &Self, b: &Self) {
        let order = self.order.min(a.order).min(b.order);
        let t = table(self.nvars());
        self.coeffs.truncate(t.count[order as usize]);
        self.order = order;
        for &(i, j, k) in &t.prod[..t.prod_count[order as usize]] {
            self.coeffs[k as usize] += s * a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }
    fn recip(&self) -> Self {
        let a = self.value();
        let mut tc = [0.0; MAX_ORDER + 1];
        for (m, c) in tc.iter_mut().enumerate() {
            *c = (-1.0f64).powi(m as i32) / a.powi(m as i32 + 1);
        }
        self.compose(&tc)
    }
    fn exp(&self) -> Self {
        let e = self.value().exp();
        let mut tc = [0.0; MAX_ORDER + 1];
        for (m, c) in tc.iter_mut().enumerate() {
            *c = e / factorial(m);
        }
        self.compose(&tc)
    }
    fn ln(&self) -> Self {
        let a = self.value();
        let mut tc = [0.0; MAX_ORDER + 1];
        tc[0] = a.ln();
        for (m, c) in tc.iter_mut().enumerate().skip(1) {
            *c = (-1.0f64).powi(m as i32 + 1) / (m as f64 * a.powi(m as i32));
        }
        self.compose(&tc)
    }
    fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut tc = [0.0; MAX_ORDER + 1];
        for (m, v) in tc.iter_mut().enumerate() {
            *v = cycle[m % 4] / factorial(m);
        }
        self.compose(&tc)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let mut tc = [0.0; MAX_ORDER + 1];
        for (m, v) in tc.iter_mut().enumerate() {
            *v = cycle[m % 4] / factorial(m);
        }
        self.compose(&tc)
    }
    fn sqrt(&self) -> Self {
        let a = self.value();
        let mut tc = [0.0; MAX_ORDER + 1];
        // binomial series of (a + δ)^{1/2}
        let mut coef = 1.0;
        for (m, v) in tc.iter_mut().enumerate() {
            *v = coef * a.powf(0.5 - m as f64);
            coef *= (0.5 - m as f64) / (m as f64 + 1.0);
        }
        self.compose(&tc)
    }
    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return self.lift(1.0);
        }
        if k < 0 {
            return self.recip().powi(-k);
        }
        let mut acc = self.clone();
        for _ in 1..k {
            acc = acc.product(self);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(n: usize, x: &[f64], order: usize) -> Vec<Jet> {
        (0..n).map(|i| Jet::variable(n, i, x[i], order)).collect()
    }

    #[test]
    fn coefficient_counts_match_binomials() {
        assert_eq!(coefficient_count(3, 4), 35);
        assert_eq!(coefficient_count(5, 4), 126);
        assert_eq!(coefficient_count(3, 2), 10);
        assert_eq!(coefficient_count(1, 4), 5);
    }

    #[test]
    fn cos_jet_at_zero() {
        let x = Jet::variable(1, 0, 0.0, 4);
        let c = x.cos();
        assert_eq!(c.partial(&[0]), 1.0);
        assert_eq!(c.partial(&[1]), 0.0);
        assert!((c.partial(&[2]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sin_third_and_fourth_derivative() {
        let x = Jet::variable(1, 0, 0.0, 4);
        let s = x.sin();
        assert!((s.partial(&[3]) + 1.0).abs() < 1e-15);
        assert!(s.partial(&[4]).abs() < 1e-15);
    }

    #[test]
    fn mixed_partials_of_product() {
        // f = x² y³ + exp(x z) at (0.3, -0.7, 1.1)
        let p = [0.3, -0.7, 1.1];
        let v = seed(3, &p, 4);
        let f = v[0].powi(2).times(&v[1].powi(3)).plus(&v[0].times(&v[2]).exp());
        let (x, y, z) = (p[0], p[1], p[2]);
        let e = (x * z).exp();
        assert!((f.value() - (x * x * y.powi(3) + e)).abs() < 1e-14);
        // ∂x∂y² f = 2x·6y
        assert!((f.partial(&[1, 2, 0]) - 12.0 * x * y).abs() < 1e-13);
        // ∂x²∂z² f = ∂x²∂z² exp(xz) = (2 + 4xz + x²z²) exp(xz) ... derived below
        let expect = (2.0 + 4.0 * x * z + x * x * z * z) * e;
        assert!((f.partial(&[2, 0, 2]) - expect).abs() < 1e-12);
    }

    #[test]
    fn derivative_lowers_order() {
        let v = seed(2, &[0.5, 0.25], 3);
        let f = v[0].sin().times(&v[1].exp());
        let fx = f.deriv(0);
        assert_eq!(fx.order(), 2);
        assert!((fx.partial(&[0, 1]) - f.partial(&[1, 1])).abs() < 1e-14);
        assert!((fx.partial(&[2, 0]) - f.partial(&[3, 0])).abs() < 1e-14);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let x = Jet::variable(1, 0, 0.7, 4);
        let a = 0.7f64;
        let r = x.recip();
        assert!((r.partial(&[3]) - (-6.0 / a.powi(4))).abs() < 1e-12);
        let l = x.ln();
        assert!((l.partial(&[4]) - (-6.0 / a.powi(4))).abs() < 1e-11);
        let s = x.sqrt();
        // d²/dx² √x = -¼ x^{-3/2}
        assert!((s.partial(&[2]) + 0.25 * a.powf(-1.5)).abs() < 1e-13);
        let q = x.powi(-2);
        assert!((q.partial(&[1]) + 2.0 / a.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn accumulate_matches_explicit_product() {
        let v = seed(3, &[0.1, 0.2, 0.3], 4);
        let a = v[0].exp();
        let b = v[1].cos().times(&v[2]);
        let mut acc = v[2].sin();
        acc.acc2(-2.5, &a, &b);
        let expect = v[2].sin().plus(&a.times(&b).scaled(-2.5));
        for (x, y) in acc.taylor().iter().zip(expect.taylor()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_follows_lowest_order() {
        let a = Jet::variable(2, 0, 1.0, 4);
        let b = Jet::variable(2, 1, 2.0, 2);
        assert_eq!(a.times(&b).order(), 2);
        assert_eq!(a.plus(&Jet::constant(2, 3.0)).order(), 4);
    }
}
