use super::{squared_distance, ClusterModel};
use crate::{Error, Result};

/// Bayesian information criterion of a clustering under identical spherical
/// Gaussians (the X-Means model). Higher is better.
///
/// For `n` points in `d` dimensions, `k` clusters of sizes `n_c` and
/// within-cluster sums of squares `SSE_c`:
///
/// ```text
/// sigma2 = SSE / (d * (n - k))
/// ll     = sum_c [ n_c ln(n_c / n) - n_c d / 2 * ln(2 pi sigma2) - SSE_c / (2 sigma2) ]
/// p      = (k - 1) + k d + 1
/// bic    = ll - p / 2 * ln(n)
/// ```
///
/// A model that fits every point exactly (`SSE = 0`) scores `+inf`.
pub fn bic_score(points: &[Vec<f64>], model: &ClusterModel) -> Result<f64> {
    let n = points.len();
    let k = model.k();
    if n <= k {
        return Err(Error::UndefinedVariance { n, k });
    }
    if model.assignment.len() != n {
        return Err(Error::Validation(
            "model assignment does not cover the scored points".into(),
        ));
    }
    let d = model.dim();
    let mut sse_c = vec![0.0; k];
    let mut n_c = vec![0usize; k];
    for (p, &a) in points.iter().zip(&model.assignment) {
        sse_c[a] += squared_distance(p, &model.centroids[a]);
        n_c[a] += 1;
    }
    let sse: f64 = sse_c.iter().sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let (nf, df, kf) = (n as f64, d as f64, k as f64);
    let sigma2 = sse / (df * (nf - kf));
    let log_norm = (2.0 * std::f64::consts::PI * sigma2).ln();
    let mut ll = 0.0;
    for (&size, &s) in n_c.iter().zip(&sse_c) {
        if size == 0 {
            continue;
        }
        let m = size as f64;
        ll += m * (m / nf).ln() - m * df / 2.0 * log_norm - s / (2.0 * sigma2);
    }
    let p = (kf - 1.0) + kf * df + 1.0;
    Ok(ll - p / 2.0 * nf.ln())
}
