use crate::error::{Result, StarError};

/// Extrapolated derivative with an a-posteriori error estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct RichardsonEstimate<V> {
    pub value: V,
    pub error: V,
}

pub const DEFAULT_LEVELS: usize = 3;

pub fn default_step(t0: f64) -> f64 {
    1e-3 * t0.abs().max(1.0)
}

/// Central differences at `h0, h0/2, …` combined by a Richardson table in
/// powers of `h²`. The error estimate is the gap between the last two
/// diagonal entries of the table.
pub fn richardson_vector<F>(mut sampler: F, t0: f64, h0: Option<f64>, levels: usize) -> Result<RichardsonEstimate<Vec<f64>>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let h0 = h0.unwrap_or_else(|| default_step(t0));
    if !(h0 > 0.0) || levels == 0 {
        return Err(StarError::InvalidArgument(format!("Richardson needs h0 > 0 and ≥ 1 level (h0 = {h0}, levels = {levels})")));
    }
    let mut table: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
    for i in 0..levels {
        let h = h0 / (1u64 << i) as f64;
        let plus = sampler(t0 + h)?;
        let minus = sampler(t0 - h)?;
        if plus.len() != minus.len() {
            return Err(StarError::ShapeMismatch("sampler output length changed".into()));
        }
        let mut row = vec![plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>()];
        for j in 1..=i {
            let factor = 4f64.powi(j as i32) - 1.0;
            let prev = &table[i - 1][j - 1];
            let cur = &row[j - 1];
            row.push(cur.iter().zip(prev).map(|(c, p)| c + (c - p) / factor).collect());
        }
        table.push(row);
    }
    let last = &table[levels - 1];
    let value = last[levels - 1].clone();
    let error = if levels >= 2 {
        value.iter().zip(&last[levels - 2]).map(|(a, b)| (a - b).abs()).collect()
    } else {
        vec![f64::NAN; value.len()]
    };
    if value.iter().any(|v| !v.is_finite()) {
        return Err(StarError::NonFinite("Richardson derivative".into()));
    }
    Ok(RichardsonEstimate { value, error })
}

/// Scalar form of [`richardson_vector`].
pub fn richardson_time_derivative<F>(mut sampler: F, t0: f64, h0: Option<f64>, levels: usize) -> Result<RichardsonEstimate<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let est = richardson_vector(|t| sampler(t).map(|v| vec![v]), t0, h0, levels)?;
    Ok(RichardsonEstimate { value: est.value[0], error: est.error[0] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let d = richardson_time_derivative(|t| Ok(t * t), 1.0, None, DEFAULT_LEVELS).unwrap();
        assert!((d.value - 2.0).abs() < 1e-10);
        let e = richardson_time_derivative(|t| Ok(t.exp()), 0.0, None, DEFAULT_LEVELS).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9);
        assert!(e.error < 1e-9);
    }

    #[test]
    fn two_level_error_ratio_is_sixteen() {
        let exact = 0.7f64.cos();
        let err = |h0: f64| {
            let d = richardson_time_derivative(|t| Ok(t.sin()), 0.7, Some(h0), 2).unwrap();
            (d.value - exact).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn sampler_failure_propagates() {
        let r = richardson_time_derivative(|_| Err(StarError::TauUnderflow { tau: 0.0 }), 0.0, None, 3);
        assert_eq!(r.unwrap_err(), StarError::TauUnderflow { tau: 0.0 });
    }
}
