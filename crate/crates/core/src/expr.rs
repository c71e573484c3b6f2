//! Closed-form expressions for the analytic field backend.
//!
//! Expressions are small trees over the coordinates `x_i` and time `t`,
//! evaluated generically through [`Scalar`] so the same expression yields
//! plain values, spatial jets, or time jets.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::jet::{Jet, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Time,
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Exp(Arc<Expr>),
    Ln(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Sqrt(Arc<Expr>),
    Powi(Arc<Expr>, i32),
}

impl Expr {
    pub fn c(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn x(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn t() -> Self {
        Expr::Time
    }

    pub fn exp(self) -> Self {
        Expr::Exp(Arc::new(self))
    }

    pub fn ln(self) -> Self {
        Expr::Ln(Arc::new(self))
    }

    pub fn sin(self) -> Self {
        Expr::Sin(Arc::new(self))
    }

    pub fn cos(self) -> Self {
        Expr::Cos(Arc::new(self))
    }

    pub fn sqrt(self) -> Self {
        Expr::Sqrt(Arc::new(self))
    }

    pub fn powi(self, k: i32) -> Self {
        Expr::Powi(Arc::new(self), k)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Time => true,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_time() || b.depends_on_time()
            }
            Expr::Neg(a)
            | Expr::Exp(a)
            | Expr::Ln(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Sqrt(a)
            | Expr::Powi(a, _) => a.depends_on_time(),
        }
    }

    /// Evaluates with coordinates `x` and time `t`.
    pub fn eval<T: Scalar>(&self, x: &[T], t: &T) -> T {
        match self {
            Expr::Const(v) => t.lift(*v),
            Expr::Var(i) => x[*i].clone(),
            Expr::Time => t.clone(),
            Expr::Add(a, b) => a.eval(x, t).plus(&b.eval(x, t)),
            Expr::Sub(a, b) => a.eval(x, t).minus(&b.eval(x, t)),
            Expr::Mul(a, b) => match (&**a, &**b) {
                (Expr::Const(c), e) | (e, Expr::Const(c)) => e.eval(x, t).scaled(*c),
                _ => a.eval(x, t).times(&b.eval(x, t)),
            },
            Expr::Div(a, b) => match &**b {
                Expr::Const(c) => a.eval(x, t).scaled(1.0 / c),
                _ => a.eval(x, t).divide(&b.eval(x, t)),
            },
            Expr::Neg(a) => a.eval(x, t).negated(),
            Expr::Exp(a) => a.eval(x, t).exp(),
            Expr::Ln(a) => a.eval(x, t).ln(),
            Expr::Sin(a) => a.eval(x, t).sin(),
            Expr::Cos(a) => a.eval(x, t).cos(),
            Expr::Sqrt(a) => a.eval(x, t).sqrt(),
            Expr::Powi(a, k) => a.eval(x, t).powi(*k),
        }
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        self.eval(x, &t)
    }

    /// Spatial jet of the given order at `x`, time frozen at `t`.
    pub fn spatial_jet(&self, x: &[f64], t: f64, order: usize) -> Jet {
        let n = x.len();
        let vars: Vec<Jet> = (0..n).map(|i| Jet::variable(n, i, x[i], order)).collect();
        let time = Jet::constant(n, t);
        self.eval(&vars, &time)
    }

    /// `(value, ∂_t)` at `(x, t)`.
    pub fn time_derivative(&self, x: &[f64], t: f64) -> (f64, f64) {
        let vars: Vec<Jet> = x.iter().map(|&v| Jet::constant(1, v)).collect();
        let time = Jet::variable(1, 0, t, 1);
        let j = self.eval(&vars, &time);
        (j.value(), j.d1(0))
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $variant:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Arc::new(self), Arc::new(rhs))
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$variant(Arc::new(self), Arc::new(Expr::Const(rhs)))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Arc::new(Expr::Const(self)), Arc::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Arc::new(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    Sin,
    Cos,
}

/// One term `coeff · t^time_power · trig(mode · x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    pub kind: TrigKind,
    pub mode: Vec<i32>,
    #[serde(default)]
    pub time_power: u32,
}

/// Real trigonometric polynomial on a coordinate torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly { constant: c, terms: Vec::new() }
    }

    pub fn term(mut self, coeff: f64, kind: TrigKind, mode: &[i32]) -> Self {
        self.terms.push(TrigTerm { coeff, kind, mode: mode.to_vec(), time_power: 0 });
        self
    }

    pub fn timed_term(mut self, coeff: f64, kind: TrigKind, mode: &[i32], time_power: u32) -> Self {
        self.terms.push(TrigTerm { coeff, kind, mode: mode.to_vec(), time_power });
        self
    }

    /// Highest absolute wavenumber along any axis.
    pub fn max_mode(&self) -> i32 {
        self.terms
            .iter()
            .flat_map(|t| t.mode.iter().map(|m| m.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Wavenumbers are per unit coordinate; `radii` rescale them so every
    /// term is periodic on a torus of circumferences `2π·radii`.
    pub fn to_expr_scaled(&self, radii: Option<&[f64]>) -> Expr {
        let mut e = Expr::c(self.constant);
        for term in &self.terms {
            let mut arg: Option<Expr> = None;
            for (i, &k) in term.mode.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let scale = radii.map_or(1.0, |r| 1.0 / r[i]);
                let piece = Expr::x(i) * (k as f64 * scale);
                arg = Some(match arg {
                    None => piece,
                    Some(a) => a + piece,
                });
            }
            let trig = match (term.kind, arg) {
                (TrigKind::Sin, Some(a)) => a.sin(),
                (TrigKind::Cos, Some(a)) => a.cos(),
                (TrigKind::Sin, None) => Expr::c(0.0),
                (TrigKind::Cos, None) => Expr::c(1.0),
            };
            let mut piece = trig * term.coeff;
            if term.time_power > 0 {
                piece = piece * Expr::t().powi(term.time_power as i32);
            }
            e = e + piece;
        }
        e
    }

    pub fn to_expr(&self) -> Expr {
        self.to_expr_scaled(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_values_and_derivatives() {
        let e = (Expr::x(0) * 2.0).sin() * Expr::x(1).exp() + Expr::t() * Expr::x(2);
        let p = [0.3, -0.2, 0.9];
        let v = e.value(&p, 0.5);
        let expect = (0.6f64).sin() * (-0.2f64).exp() + 0.5 * 0.9;
        assert!((v - expect).abs() < 1e-15);
        let j = e.spatial_jet(&p, 0.5, 2);
        assert!((j.partial(&[1, 0, 0]) - 2.0 * 0.6f64.cos() * (-0.2f64).exp()).abs() < 1e-14);
        assert!((j.partial(&[0, 0, 1]) - 0.5).abs() < 1e-15);
        let (_, dt) = e.time_derivative(&p, 0.5);
        assert!((dt - 0.9).abs() < 1e-15);
    }

    #[test]
    fn trig_poly_respects_time_power() {
        let p = TrigPoly::constant(0.0)
            .term(1.0, TrigKind::Cos, &[1, 0, 0])
            .timed_term(1.0, TrigKind::Sin, &[0, 1, 0], 1);
        let e = p.to_expr();
        assert!(e.depends_on_time());
        let (v, dt) = e.time_derivative(&[0.0, std::f64::consts::FRAC_PI_2, 0.0], 2.0);
        assert!((v - 3.0).abs() < 1e-15);
        assert!((dt - 1.0).abs() < 1e-15);
    }
}
