use nalgebra::DMatrix;

use crate::curvature::{connection_with_threshold, lie_derivative_metric, MetricJet};
use crate::error::{Result, StarError};
use crate::expr::Expr;
use crate::fields::{Domain, MetricField, VectorField};
use crate::jet::{multi_indices, Jet, Scalar};
use crate::tensor::EPS_PD;

/// RK4 steps used for flows of vector fields.
pub const DEFAULT_FLOW_STEPS: usize = 256;

/// `ψ_t` and its Jacobian `J[a*n+i] = ∂ψ^a/∂x^i` at a set of points.
#[derive(Clone, Debug)]
pub struct DiffeoFlowMap {
    pub t: f64,
    pub points: Vec<Vec<f64>>,
    pub images: Vec<Vec<f64>>,
    pub jacobians: Vec<Vec<f64>>,
}

impl DiffeoFlowMap {
    pub fn min_det(&self) -> f64 {
        let n = self.points.first().map_or(0, |p| p.len());
        self.jacobians
            .iter()
            .map(|j| DMatrix::from_row_slice(n, n, j).determinant())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Σ_α c_α δ^α` for the Taylor coefficients `c` of `outer` and inner jets
/// `δ` without constant term.
fn compose(outer: &Jet, inner: &[Jet]) -> Jet {
    let n = outer.nvars();
    let order = inner[0].order().min(outer.order());
    let zero = inner[0].truncate(order).scaled(0.0);
    let mut powers: Vec<Vec<Jet>> = inner
        .iter()
        .map(|d| {
            let d = d.truncate(order);
            let mut p = vec![zero.shifted(1.0)];
            for k in 1..=order {
                let next = p[k - 1].times(&d);
                p.push(next);
            }
            p
        })
        .collect();
    powers.truncate(n);
    let mut acc = zero.clone();
    for (alpha, c) in multi_indices(n, order).iter().zip(outer.taylor()) {
        if *c == 0.0 {
            continue;
        }
        let mut term = zero.shifted(*c);
        for (i, &a) in alpha.iter().enumerate() {
            if a > 0 {
                term = term.times(&powers[i][a as usize]);
            }
        }
        acc.acc1(1.0, &term);
    }
    acc
}

type Scale<'a> = &'a dyn Fn(f64) -> Result<f64>;

/// `X(ψ, s)` as jets in the base point.
fn field_on_jets(field: &VectorField, scale: Scale, domain: &Domain, psi: &[Jet], s: f64) -> Result<Vec<Jet>> {
    let y: Vec<f64> = psi.iter().map(|j| j.value()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StarError::NonFinite("flow map".into()));
    }
    let order = psi[0].order();
    let outer = field.eval_jets(domain, &y, s, order)?;
    let delta: Vec<Jet> = psi.iter().zip(&y).map(|(j, v)| j.shifted(-v)).collect();
    let c = scale(s)?;
    Ok(outer.iter().map(|o| compose(o, &delta).scaled(c)).collect())
}

/// Jets of `ψ_t` about `x0` from RK4 on `dψ/ds = c(s)·X(ψ, s)`.
fn flow_jets(
    field: &VectorField,
    scale: Scale,
    domain: &Domain,
    x0: &[f64],
    t: f64,
    steps: usize,
    order: usize,
) -> Result<Vec<Jet>> {
    let n = x0.len();
    if field.dim() != n {
        return Err(StarError::ShapeMismatch("vector field and point dimensions differ".into()));
    }
    domain.check_point(x0)?;
    let mut psi: Vec<Jet> = (0..n).map(|i| Jet::variable(n, i, x0[i], order)).collect();
    if t == 0.0 {
        return Ok(psi);
    }
    let h = t / steps.max(1) as f64;
    let axpy = |a: &[Jet], s: f64, k: &[Jet]| -> Vec<Jet> {
        a.iter()
            .zip(k)
            .map(|(x, y)| {
                let mut z = x.clone();
                z.acc1(s, y);
                z
            })
            .collect()
    };
    for m in 0..steps.max(1) {
        let s = m as f64 * h;
        let k1 = field_on_jets(field, scale, domain, &psi, s)?;
        let k2 = field_on_jets(field, scale, domain, &axpy(&psi, 0.5 * h, &k1), s + 0.5 * h)?;
        let k3 = field_on_jets(field, scale, domain, &axpy(&psi, 0.5 * h, &k2), s + 0.5 * h)?;
        let k4 = field_on_jets(field, scale, domain, &axpy(&psi, h, &k3), s + h)?;
        for i in 0..n {
            psi[i].acc1(h / 6.0, &k1[i]);
            psi[i].acc1(h / 3.0, &k2[i]);
            psi[i].acc1(h / 3.0, &k3[i]);
            psi[i].acc1(h / 6.0, &k4[i]);
        }
        let y: Vec<f64> = psi.iter().map(|j| j.value()).collect();
        domain.check_point(&y)?;
    }
    Ok(psi)
}

fn unit_scale(_: f64) -> Result<f64> {
    Ok(1.0)
}

/// `(ψ*T)_ij = J^a_i J^b_j T_ab`.
fn pull(n: usize, jac: &[f64], t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += jac[a * n + i] * jac[b * n + j] * t[a * n + b];
                }
            }
            out[i * n + j] = s;
        }
    }
    out
}

fn jacobian(psi: &[Jet]) -> Vec<f64> {
    let n = psi.len();
    (0..n * n).map(|ai| psi[ai / n].d1(ai % n)).collect()
}

/// Flow `ψ_t` of `X` from `s = 0` and the pullback `ψ_t*g` (with `g` taken at
/// time `t_metric`) at each point, as full `n×n` matrices.
pub fn pullback_by_flow(
    x: &VectorField,
    domain: &Domain,
    points: &[Vec<f64>],
    t: f64,
    g: &MetricField,
    t_metric: f64,
    steps: usize,
) -> Result<(DiffeoFlowMap, Vec<Vec<f64>>)> {
    let n = domain.dim();
    let mut map = DiffeoFlowMap { t, points: points.to_vec(), images: Vec::new(), jacobians: Vec::new() };
    let mut pulled = Vec::with_capacity(points.len());
    for p in points {
        let psi = flow_jets(x, &unit_scale, domain, p, t, steps, 1)?;
        let y: Vec<f64> = psi.iter().map(|j| j.value()).collect();
        let jac = jacobian(&psi);
        let gy: Vec<f64> = g.eval_jets(domain, &y, t_metric, 0)?.iter().map(|j| j.value()).collect();
        pulled.push(pull(n, &jac, &gy));
        map.images.push(y);
        map.jacobians.push(jac);
    }
    Ok((map, pulled))
}

/// Jets (of order `order ≤ 3`) of `ψ_t*g` about `x0`, full `n×n`.
#[allow(clippy::too_many_arguments)]
pub fn pullback_jets(
    x: &VectorField,
    domain: &Domain,
    x0: &[f64],
    t: f64,
    g: &MetricField,
    t_metric: f64,
    steps: usize,
    order: usize,
) -> Result<Vec<Jet>> {
    pullback_jets_scaled(x, &unit_scale, domain, x0, t, g, t_metric, steps, order)
}

#[allow(clippy::too_many_arguments)]
fn pullback_jets_scaled(
    x: &VectorField,
    scale: Scale,
    domain: &Domain,
    x0: &[f64],
    t: f64,
    g: &MetricField,
    t_metric: f64,
    steps: usize,
    order: usize,
) -> Result<Vec<Jet>> {
    if order + 1 > crate::jet::MAX_ORDER {
        return Err(StarError::UnsupportedOrder { requested: order + 1, max: crate::jet::MAX_ORDER });
    }
    let n = x0.len();
    let psi = flow_jets(x, scale, domain, x0, t, steps, order + 1)?;
    let y: Vec<f64> = psi.iter().map(|j| j.value()).collect();
    let delta: Vec<Jet> = psi.iter().zip(&y).map(|(j, v)| j.shifted(-v).truncate(order)).collect();
    let gy: Vec<Jet> = g.eval_jets(domain, &y, t_metric, order)?.iter().map(|o| compose(o, &delta)).collect();
    let dpsi: Vec<Jet> = (0..n * n).map(|ai| psi[ai / n].deriv(ai % n)).collect();
    let zero = dpsi[0].scaled(0.0);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = zero.clone();
            for a in 0..n {
                for b in 0..n {
                    s.acc1(1.0, &dpsi[a * n + i].times(&dpsi[b * n + j]).times(&gy[a * n + b]));
                }
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// `ḡ(t) = σ(t)·ψ_t*g(t)` with `ψ_t` the flow of `X(x, s) = c(s)·V(x, s)`
/// from `s = 0`. `σ` and `c` are expressions in `t` alone.
#[derive(Clone, Debug)]
pub struct SelfSimilarSpec {
    pub domain: Domain,
    pub metric: MetricField,
    pub vector: VectorField,
    pub vector_scale: Expr,
    pub sigma: Expr,
    pub steps: usize,
}

/// `ḡ` and the three-term derivative `σ′ψ*g + σψ*(∂_tg) + σψ*(£_Xg)` at one point.
#[derive(Clone, Debug)]
pub struct SelfSimilarSample {
    pub t: f64,
    pub sigma: f64,
    pub sigma_dot: f64,
    pub metric: Vec<f64>,
    pub rhs_eq15: Vec<f64>,
    pub image: Vec<f64>,
    pub jacobian: Vec<f64>,
}

impl SelfSimilarSpec {
    fn time_value(&self, e: &Expr, t: f64) -> (f64, f64) {
        e.time_derivative(&vec![0.0; self.domain.dim()], t)
    }

    fn sigma_checked(&self, t: f64) -> Result<(f64, f64)> {
        let (s, ds) = self.time_value(&self.sigma, t);
        if !(s > 0.0) {
            return Err(StarError::SelfSimilarExpired { sigma: s });
        }
        Ok((s, ds))
    }

    fn scale(&self) -> impl Fn(f64) -> Result<f64> + '_ {
        move |s| {
            let c = self.time_value(&self.vector_scale, s).0;
            if !c.is_finite() {
                return Err(StarError::SelfSimilarExpired { sigma: self.time_value(&self.sigma, s).0 });
            }
            Ok(c)
        }
    }

    pub fn sample(&self, x0: &[f64], t: f64) -> Result<SelfSimilarSample> {
        let n = self.domain.dim();
        let (sigma, sigma_dot) = self.sigma_checked(t)?;
        let scale = self.scale();
        let psi = flow_jets(&self.vector, &scale, &self.domain, x0, t, self.steps, 1)?;
        let y: Vec<f64> = psi.iter().map(|j| j.value()).collect();
        let jac = jacobian(&psi);

        let gj = self.metric.eval_jets(&self.domain, &y, t, 1)?;
        let g: Vec<f64> = gj.iter().map(|j| j.value()).collect();
        let dg: Vec<f64> = (0..n * n * n).map(|kij| gj[kij % (n * n)].d1(kij / (n * n))).collect();
        let conn = connection_with_threshold(&MetricJet { dim: n, g: g.clone(), dg, ddg: Vec::new() }, EPS_PD)?;
        let c = scale(t)?;
        let vj = self.vector.eval_jets(&self.domain, &y, t, 1)?;
        let v: Vec<f64> = vj.iter().map(|j| c * j.value()).collect();
        let dv: Vec<f64> = (0..n * n).map(|ik| c * vj[ik % n].d1(ik / n)).collect();
        let lie = lie_derivative_metric(&conn, &v, &dv);
        let g_dot: Vec<f64> = match &self.metric {
            MetricField::Analytic { comps, .. } => comps.iter().map(|e| e.time_derivative(&y, t).1).collect(),
            MetricField::Grid(_) => vec![0.0; n * n],
        };
        let pg = pull(n, &jac, &g);
        let pdot = pull(n, &jac, &g_dot);
        let plie = pull(n, &jac, &lie);
        Ok(SelfSimilarSample {
            t,
            sigma,
            sigma_dot,
            metric: pg.iter().map(|v| sigma * v).collect(),
            rhs_eq15: (0..n * n).map(|a| sigma_dot * pg[a] + sigma * pdot[a] + sigma * plie[a]).collect(),
            image: y,
            jacobian: jac,
        })
    }

    /// Jets of `ḡ(t)` about `x0` (order ≤ 3).
    pub fn metric_jets(&self, x0: &[f64], t: f64, order: usize) -> Result<Vec<Jet>> {
        let (sigma, _) = self.sigma_checked(t)?;
        let scale = self.scale();
        let jets = pullback_jets_scaled(&self.vector, &scale, &self.domain, x0, t, &self.metric, t, self.steps, order)?;
        Ok(jets.iter().map(|j| j.scaled(sigma)).collect())
    }
}

/// The self-similar family generated by a static `g0`, a field `Y` and `λ`:
/// `σ(t) = 1 − 2λt` and `X(t) = Y/σ(t)`.
pub fn self_similar_metric(domain: &Domain, g0: &MetricField, y: &VectorField, lambda: f64) -> SelfSimilarSpec {
    let sigma = Expr::c(1.0) - Expr::t() * (2.0 * lambda);
    SelfSimilarSpec {
        domain: domain.clone(),
        metric: g0.clone(),
        vector: y.clone(),
        vector_scale: Expr::c(1.0) / sigma.clone(),
        sigma,
        steps: DEFAULT_FLOW_STEPS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::richardson_vector;

    fn torus() -> Domain {
        Domain::unit_torus(3)
    }

    #[test]
    fn zero_field_is_identity() {
        let g = MetricField::diagonal(vec![Expr::x(1).cos() + 2.0, Expr::c(1.0), Expr::c(3.0)]);
        let pts = vec![vec![0.3, 1.1, -0.4]];
        let (map, pulled) = pullback_by_flow(&VectorField::zero(3), &torus(), &pts, 0.7, &g, 0.0, 16).unwrap();
        assert_eq!(map.images[0], pts[0]);
        assert_eq!(map.jacobians[0], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(pulled[0], g.eval_jets(&torus(), &pts[0], 0.0, 0).unwrap().iter().map(|j| j.value()).collect::<Vec<_>>());
    }

    #[test]
    fn translation_shifts_argument() {
        let c = 0.4;
        let x = VectorField::Analytic(vec![Expr::c(c), Expr::c(0.0), Expr::c(0.0)]);
        let q = |e: Expr| (e.sin() * 0.5).exp();
        let g = MetricField::diagonal(vec![q(Expr::x(0)), Expr::c(1.0), Expr::c(1.0)]);
        let pts = vec![vec![0.2, 0.0, 0.0], vec![2.0, 1.0, -1.0]];
        let t = 0.9;
        let (map, pulled) = pullback_by_flow(&x, &torus(), &pts, t, &g, 0.0, 32).unwrap();
        for (p, m) in pts.iter().zip(&pulled) {
            let exact = (0.5 * (p[0] + c * t).sin()).exp();
            assert!((m[0] - exact).abs() < 1e-14);
            assert!((m[4] - 1.0).abs() < 1e-15);
        }
        assert!((map.min_det() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lie_derivative_identity_along_flow() {
        // d/dt ψ_t*g = ψ_t*(£_X g) for a static field and metric
        let x = VectorField::Analytic(vec![Expr::x(1).sin() * 0.3, Expr::x(2).cos() * 0.2 + 0.1, Expr::x(0).sin() * 0.25]);
        let g = MetricField::analytic(
            3,
            vec![
                Expr::x(1).cos() * 0.2 + 1.5, Expr::x(2).sin() * 0.1, Expr::c(0.0),
                Expr::x(2).sin() * 0.1, Expr::c(1.0), Expr::c(0.0),
                Expr::c(0.0), Expr::c(0.0), (Expr::x(0).sin() * 0.3).exp(),
            ],
        )
        .unwrap();
        let spec = SelfSimilarSpec {
            domain: torus(),
            metric: g,
            vector: x,
            vector_scale: Expr::c(1.0),
            sigma: Expr::c(1.0),
            steps: DEFAULT_FLOW_STEPS,
        };
        let p = [0.4, -0.8, 1.3];
        let t0 = 0.5;
        let fd = richardson_vector(|t| Ok(spec.sample(&p, t)?.metric), t0, Some(1e-2), 3).unwrap();
        let rhs = spec.sample(&p, t0).unwrap().rhs_eq15;
        for (a, b) in fd.value.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn jets_agree_with_values() {
        let x = VectorField::Analytic(vec![Expr::x(1).sin() * 0.3, Expr::c(0.1), Expr::x(0).cos() * 0.2]);
        let g = MetricField::diagonal(vec![Expr::x(1).cos() * 0.3 + 1.0, Expr::c(1.0), (Expr::x(0).sin() * 0.4).exp()]);
        let p = [0.3, 0.2, 0.1];
        let jets = pullback_jets(&x, &torus(), &p, 0.6, &g, 0.0, 64, 2).unwrap();
        let (_, vals) = pullback_by_flow(&x, &torus(), &[p.to_vec()], 0.6, &g, 0.0, 64).unwrap();
        for (j, v) in jets.iter().zip(&vals[0]) {
            assert!((j.value() - v).abs() < 1e-13);
        }
        // ∂_0 of the (0,0) entry by a central difference of values
        let h = 1e-4;
        let at = |d: f64| pullback_by_flow(&x, &torus(), &[vec![p[0] + d, p[1], p[2]]], 0.6, &g, 0.0, 64).unwrap().1[0][0];
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!((jets[0].d1(0) - fd).abs() < 1e-7);
    }

    #[test]
    fn pure_scaling_and_expiry() {
        let dom = Domain::analytic_box(&[-1.0; 3], &[1.0; 3]).unwrap();
        let spec = self_similar_metric(&dom, &MetricField::flat(3), &VectorField::zero(3), 0.5);
        let s = spec.sample(&[0.1, 0.2, 0.3], 0.4).unwrap();
        assert!((s.metric[0] - 0.6).abs() < 1e-15);
        assert!((s.rhs_eq15[0] + 1.0).abs() < 1e-15);
        assert!(matches!(spec.sample(&[0.0; 3], 1.0), Err(StarError::SelfSimilarExpired { .. })));
    }

    #[test]
    fn leaving_the_box_is_an_error() {
        let dom = Domain::analytic_box(&[-1.0; 2], &[1.0; 2]).unwrap();
        let x = VectorField::Analytic(vec![Expr::c(1.0), Expr::c(0.0)]);
        let r = pullback_by_flow(&x, &dom, &[vec![0.5, 0.0]], 1.0, &MetricField::flat(2), 0.0, 16);
        assert!(matches!(r, Err(StarError::OutsideDomain { .. })));
    }

    #[test]
    fn compose_matches_direct_expansion() {
        // sin(δ) with δ = 0.5·x0 + x1² about 0
        let outer = Expr::x(0).sin().spatial_jet(&[0.0, 0.0], 0.0, 3);
        let inner = (Expr::x(0) * 0.5 + Expr::x(1) * Expr::x(1)).spatial_jet(&[0.0, 0.0], 0.0, 3);
        let direct = (Expr::x(0) * 0.5 + Expr::x(1) * Expr::x(1)).sin().spatial_jet(&[0.0, 0.0], 0.0, 3);
        let got = compose(&outer, &[inner.clone(), inner.scaled(0.0)]);
        for (a, b) in got.taylor().iter().zip(direct.taylor()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
