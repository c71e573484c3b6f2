use crate::error::{Result, StarError};
use crate::fields::{Grid, GridMetric};

/// A metric family `t ↦ g(t)` on a grid together with `∂_t g`.
pub trait MetricPath {
    fn grid(&self) -> &Grid;
    /// Closed interval on which the family is defined.
    fn span(&self) -> (f64, f64);
    fn metric(&self, t: f64) -> Result<GridMetric>;
    fn metric_dot(&self, t: f64) -> Result<GridMetric>;

    fn check_window(&self, lo: f64, hi: f64) -> Result<()> {
        let (start, end) = self.span();
        if lo < start || hi > end {
            return Err(StarError::WindowExceedsTrajectory { lo, hi, start, end });
        }
        Ok(())
    }
}

/// Time-independent metric.
#[derive(Clone, Debug)]
pub struct StaticMetricPath(pub GridMetric);

impl MetricPath for StaticMetricPath {
    fn grid(&self) -> &Grid {
        &self.0.grid
    }

    fn span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn metric(&self, _t: f64) -> Result<GridMetric> {
        Ok(self.0.clone())
    }

    fn metric_dot(&self, _t: f64) -> Result<GridMetric> {
        Ok(GridMetric::zeros(&self.0.grid))
    }
}

/// Cubic Hermite basis `(h00, h10, h01, h11)` at `s ∈ [0, 1]`.
pub(crate) fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2]
}

/// `d/ds` of [`hermite_basis`].
pub(crate) fn hermite_basis_ds(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s]
}

/// Snapshot index `k` and local coordinate `s` with `t = t_k + s·(t_{k+1} − t_k)`.
pub(crate) fn locate(times: &[f64], t: f64) -> Result<(usize, f64)> {
    let (start, end) = (times[0], times[times.len() - 1]);
    if !(t >= start && t <= end) {
        return Err(StarError::WindowExceedsTrajectory { lo: t, hi: t, start, end });
    }
    let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(k) => k.min(times.len() - 2),
        Err(k) => k - 1,
    };
    Ok((k, (t - times[k]) / (times[k + 1] - times[k])))
}

/// Piecewise cubic Hermite interpolation through stored `(g, ∂_t g)` snapshots.
#[derive(Clone, Debug)]
pub struct HermiteMetricPath {
    times: Vec<f64>,
    metrics: Vec<GridMetric>,
    velocities: Vec<GridMetric>,
}

impl HermiteMetricPath {
    pub fn new(times: Vec<f64>, metrics: Vec<GridMetric>, velocities: Vec<GridMetric>) -> Result<Self> {
        if times.len() < 2 || metrics.len() != times.len() || velocities.len() != times.len() {
            return Err(StarError::ShapeMismatch("a metric path needs ≥ 2 matching snapshots".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StarError::InvalidArgument("snapshot times must increase".into()));
        }
        Ok(HermiteMetricPath { times, metrics, velocities })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[GridMetric] {
        &self.metrics
    }

    pub fn velocities(&self) -> &[GridMetric] {
        &self.velocities
    }

    fn combine(&self, k: usize, w: [f64; 4]) -> GridMetric {
        let (a, b) = (&self.metrics[k], &self.metrics[k + 1]);
        let (da, db) = (&self.velocities[k], &self.velocities[k + 1]);
        let comps = (0..a.comps.len())
            .map(|c| {
                (0..a.grid.len())
                    .map(|p| w[0] * a.comps[c][p] + w[1] * da.comps[c][p] + w[2] * b.comps[c][p] + w[3] * db.comps[c][p])
                    .collect()
            })
            .collect();
        GridMetric { grid: a.grid.clone(), comps }
    }
}

impl MetricPath for HermiteMetricPath {
    fn grid(&self) -> &Grid {
        &self.metrics[0].grid
    }

    fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    fn metric(&self, t: f64) -> Result<GridMetric> {
        let (k, s) = locate(&self.times, t)?;
        if s == 0.0 {
            return Ok(self.metrics[k].clone());
        }
        let dt = self.times[k + 1] - self.times[k];
        let b = hermite_basis(s);
        Ok(self.combine(k, [b[0], b[1] * dt, b[2], b[3] * dt]))
    }

    fn metric_dot(&self, t: f64) -> Result<GridMetric> {
        let (k, s) = locate(&self.times, t)?;
        if s == 0.0 {
            return Ok(self.velocities[k].clone());
        }
        let dt = self.times[k + 1] - self.times[k];
        let b = hermite_basis_ds(s);
        Ok(self.combine(k, [b[0] / dt, b[1], b[2] / dt, b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Domain;

    fn scalar_metric(grid: &Grid, v: f64) -> GridMetric {
        let mut g = GridMetric::zeros(grid);
        for c in &mut g.comps {
            c.iter_mut().for_each(|x| *x = v);
        }
        g
    }

    #[test]
    fn reproduces_cubics() {
        let grid = Grid::new(&Domain::unit_torus(2), 4).unwrap();
        let p = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t.powi(3);
        let dp = |t: f64| 1.0 - 4.0 * t + 1.5 * t * t;
        let times = vec![0.0, 0.3, 0.7];
        let path = HermiteMetricPath::new(
            times.clone(),
            times.iter().map(|&t| scalar_metric(&grid, p(t))).collect(),
            times.iter().map(|&t| scalar_metric(&grid, dp(t))).collect(),
        )
        .unwrap();
        for &t in &[0.0, 0.1, 0.3, 0.55, 0.7] {
            assert!((path.metric(t).unwrap().comps[0][0] - p(t)).abs() < 1e-14);
            assert!((path.metric_dot(t).unwrap().comps[1][3] - dp(t)).abs() < 1e-13);
        }
        assert!(matches!(path.metric(0.8), Err(StarError::WindowExceedsTrajectory { .. })));
    }

    #[test]
    fn locate_edges() {
        let times = [0.0, 1.0, 2.0];
        assert_eq!(locate(&times, 2.0).unwrap(), (1, 1.0));
        assert_eq!(locate(&times, 1.0).unwrap(), (1, 0.0));
        assert!(locate(&times, f64::NAN).is_err());
    }
}
