//! One-sample Kolmogorov-Smirnov test of residuals against N(0, sigma^2).

use super::dist::{kolmogorov_sf, normal_cdf};
use crate::error::{Error, Result};

/// Fewer residuals than this and the test is skipped.
pub const KS_MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// Largest gap between the empirical CDF of `residuals` and Φ(r / sigma).
pub fn ks_distance(residuals: &[f64], sigma: f64) -> f64 {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let f = normal_cdf(r / sigma);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Returns `None` when there are too few residuals for the asymptotic
/// distribution to mean anything; callers treat that as a pass.
pub fn ks_statistic(residuals: &[f64], sigma: f64) -> Result<Option<KsResult>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam {
            name: "sigma",
            reason: "must be positive".into(),
        });
    }
    if residuals.len() < KS_MIN_SAMPLES {
        return Ok(None);
    }
    let d = ks_distance(residuals, sigma);
    let sqrt_n = (residuals.len() as f64).sqrt();
    // Stephens' small-sample correction of the asymptotic statistic.
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(Some(KsResult {
        d,
        p_value: kolmogorov_sf(lambda),
    }))
}
