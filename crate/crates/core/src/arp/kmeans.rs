//! Exact two-cluster k-means on scalar objective values.

use crate::error::{Error, Result};

/// Result of the optimal split of sorted values.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Values `<= threshold` form the good (lower-mean) cluster.
    pub threshold: f64,
    /// Within-cluster sum of squared errors of the split.
    pub sse: f64,
    pub good_count: usize,
}

/// Optimal 2-means split by scanning every boundary between distinct sorted
/// values. Ties in SSE keep the earliest boundary.
pub fn optimal_split(values: &[f64]) -> Result<Split> {
    if values.len() < 2 {
        return Err(Error::Input(format!("need at least 2 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateLabels);
    }
    // center on the mean so prefix sums of squares stay well conditioned
    let shift = sorted.iter().sum::<f64>() / n as f64;
    let mut s = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    for (i, v) in sorted.iter().enumerate() {
        let c = v - shift;
        s[i + 1] = s[i] + c;
        q[i + 1] = q[i] + c * c;
    }
    let sse = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let sum = s[b] - s[a];
        (q[b] - q[a] - sum * sum / m).max(0.0)
    };
    let mut best: Option<(usize, f64)> = None;
    for k in 1..n {
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let cost = sse(0, k) + sse(k, n);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((k, cost));
        }
    }
    let (k, cost) = best.expect("at least one distinct boundary");
    Ok(Split { threshold: sorted[k - 1], sse: cost, good_count: k })
}

/// Labels each value as good (`true`) or bad by exact 1-D 2-means; the
/// cluster with the lower mean is good.
pub fn label_observations(values: &[f64]) -> Result<Vec<bool>> {
    if values.len() < 4 {
        return Err(Error::Input(format!("labeling needs at least 4 observations, got {}", values.len())));
    }
    let split = optimal_split(values)?;
    Ok(values.iter().map(|&v| v <= split.threshold).collect())
}
