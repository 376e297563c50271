//! Linear calibration: which integer indices can explain the next TOA given
//! the line fitted so far.

use crate::error::{Error, Result};
use crate::statkit::{chi2_quantile, normal_quantile, OlsFit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CandidateKind {
    /// Inclusive integer range.
    Bounded {
        lo: i64,
        hi: i64,
    },
    Empty,
    /// The calibration inequality does not bound the index; callers fall
    /// back to the admissible gap window.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRange {
    pub kind: CandidateKind,
    /// Width of the continuous solution interval before rounding, infinite
    /// when unbounded.
    pub width: f64,
}

impl CandidateRange {
    pub fn bounded(lo: i64, hi: i64, width: f64) -> Self {
        if lo > hi {
            return Self::empty(width);
        }
        Self {
            kind: CandidateKind::Bounded { lo, hi },
            width,
        }
    }

    pub fn empty(width: f64) -> Self {
        Self {
            kind: CandidateKind::Empty,
            width,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            kind: CandidateKind::Unbounded,
            width: f64::INFINITY,
        }
    }

    /// Candidate indices in increasing order; empty for unbounded ranges.
    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let (lo, hi) = match self.kind {
            CandidateKind::Bounded { lo, hi } => (lo, hi),
            _ => (1, 0),
        };
        lo..=hi
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.kind, CandidateKind::Empty)
    }
}

fn require_determined(fit: &OlsFit) -> Result<()> {
    if fit.is_determined() {
        Ok(())
    } else {
        Err(Error::DegenerateFit)
    }
}

/// Half-width of the prediction interval for an observation at index `x0`,
/// at two-sided level `c_eff`.
pub fn prediction_halfwidth(fit: &OlsFit, x0: f64, sigma_bar: f64, c_eff: f64) -> Result<f64> {
    require_determined(fit)?;
    let z = normal_quantile(1.0 - c_eff / 2.0)?;
    Ok(prediction_halfwidth_with(fit, x0, sigma_bar, z))
}

/// Same as [`prediction_halfwidth`] with the normal quantile supplied.
#[inline]
pub fn prediction_halfwidth_with(fit: &OlsFit, x0: f64, sigma_bar: f64, z: f64) -> f64 {
    let u = x0 - fit.x_bar();
    z * sigma_bar * (1.0 + 1.0 / fit.k() as f64 + u * u / fit.ss_x()).sqrt()
}

/// Quantile scale `q = χ²₁(1 − c/2) · σ̄²` of the calibration inequality.
pub fn calibration_scale(sigma_bar: f64, c: f64) -> Result<f64> {
    Ok(chi2_quantile(1, 1.0 - c / 2.0)? * sigma_bar * sigma_bar)
}

/// Integer indices `x0` whose prediction interval contains `y0`.
pub fn discrimination_interval(
    fit: &OlsFit,
    y0: f64,
    sigma_bar: f64,
    c: f64,
) -> Result<CandidateRange> {
    require_determined(fit)?;
    Ok(discrimination_interval_with(
        fit,
        y0,
        calibration_scale(sigma_bar, c)?,
    ))
}

/// Solves `(d − T̂u)² ≤ q (1 + 1/k + u²/SS_x)` for `u = x0 − x̄`, with
/// `d = y0 − ȳ`.
pub fn discrimination_interval_with(fit: &OlsFit, y0: f64, q: f64) -> CandidateRange {
    let t = fit.t_hat();
    let ss_x = fit.ss_x();
    let x_bar = fit.x_bar();
    let d = y0 - fit.y_bar();

    let a = t * t - q / ss_x;
    if !(a > 0.0) {
        return CandidateRange::unbounded();
    }
    // a u² − 2 h u + c0 ≤ 0
    let h = d * t;
    let c0 = d * d - q * (1.0 + 1.0 / fit.k() as f64);
    let disc = h * h - a * c0;
    if disc < 0.0 {
        return CandidateRange::empty(0.0);
    }
    let s = disc.sqrt();
    let big = if h >= 0.0 { h + s } else { h - s };
    let (r1, r2) = if big == 0.0 {
        (0.0, 0.0)
    } else {
        (big / a, c0 / big)
    };
    let (u_lo, u_hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    let lo = (x_bar + u_lo).ceil();
    let hi = (x_bar + u_hi).floor();
    let width = u_hi - u_lo;
    if lo > hi {
        return CandidateRange::empty(width);
    }
    CandidateRange::bounded(lo as i64, hi as i64, width)
}

/// Intersects a candidate range with the admissible successors
/// `x_last + 1 ..= x_last + n_max_gap`.
pub fn clip_candidates(r: CandidateRange, x_last: u64, n_max_gap: u64) -> CandidateRange {
    let first = x_last as i64 + 1;
    let last = x_last as i64 + n_max_gap as i64;
    match r.kind {
        CandidateKind::Unbounded => CandidateRange {
            kind: CandidateKind::Bounded {
                lo: first,
                hi: last,
            },
            width: r.width,
        },
        CandidateKind::Bounded { lo, hi } => {
            CandidateRange::bounded(lo.max(first), hi.min(last), r.width)
        }
        CandidateKind::Empty => r,
    }
}
