//! Problem data: observations, hyper-parameters, index assignments and the
//! least-squares objective they are scored with.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection times shifted so that the first one sits at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    toas: Vec<f64>,
    offset: f64,
}

impl Observations {
    pub fn toas(&self) -> &[f64] {
        &self.toas
    }

    /// Value subtracted from the raw TOAs.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.toas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.toas.is_empty()
    }
}

/// Sorts the TOAs and shifts them so that the earliest one is at zero.
pub fn normalize(toas: &[f64]) -> Result<Observations> {
    if toas.len() < 2 {
        return Err(Error::TooFewToas(toas.len()));
    }
    if let Some(pos) = toas.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let mut sorted = toas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let offset = sorted[0];
    for t in &mut sorted {
        *t -= offset;
    }
    Ok(Observations {
        toas: sorted,
        offset,
    })
}

/// Search and test parameters shared by every stage of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Significance level of every statistical test.
    pub c: f64,
    /// Upper bound on the TOA noise standard deviation.
    pub sigma_bar: f64,
    /// Largest allowed index step between consecutive true pulses.
    pub n_max_gap: u64,
    /// Upper bound on the fraction of spurious detections.
    pub p_bar: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub restart_cap: u32,
    pub normality_test_enabled: bool,
}

impl HyperParams {
    pub fn new(
        c: f64,
        sigma_bar: f64,
        n_max_gap: u64,
        p_bar: f64,
        t_low: f64,
        t_high: f64,
    ) -> Result<Self> {
        let params = Self {
            c,
            sigma_bar,
            n_max_gap,
            p_bar,
            t_low,
            t_high,
            restart_cap: 2,
            normality_test_enabled: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad("c", "must lie in (0, 1)");
        }
        if !(self.sigma_bar > 0.0 && self.sigma_bar.is_finite()) {
            return bad("sigma_bar", "must be positive and finite");
        }
        if self.n_max_gap == 0 {
            return bad("n_max_gap", "must be at least 1");
        }
        if !(self.p_bar >= 0.0 && self.p_bar < 1.0) {
            return bad("p_bar", "must lie in [0, 1)");
        }
        if !(self.t_low > 0.0) {
            return bad("t_low", "must be positive");
        }
        if !(self.t_low <= self.t_high) {
            return bad("t_high", "must be at least t_low");
        }
        Ok(())
    }

    /// Pulses keep their time order only when the noise bound is small
    /// against the shortest admissible period.
    pub fn ordering_assumption_holds(&self) -> bool {
        self.sigma_bar / self.t_low < 0.1
    }
}

/// Period index of one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Index(u64),
    Outlier,
}

impl Slot {
    pub fn index(self) -> Option<u64> {
        match self {
            Slot::Index(x) => Some(x),
            Slot::Outlier => None,
        }
    }

    pub fn is_outlier(self) -> bool {
        matches!(self, Slot::Outlier)
    }

    /// Integer key with outliers ordered before every index.
    pub fn sort_key(self) -> i64 {
        match self {
            Slot::Index(x) => x as i64,
            Slot::Outlier => -1,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Index(x) => write!(f, "{x}"),
            Slot::Outlier => f.write_str("-"),
        }
    }
}

/// One period index (or outlier mark) per detection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<Slot>);

impl Assignment {
    pub fn new(slots: Vec<Slot>) -> Self {
        Self(slots)
    }

    /// Builds an assignment from integers, with any negative value read as
    /// an outlier.
    pub fn from_ints(xs: &[i64]) -> Self {
        Self(
            xs.iter()
                .map(|&x| {
                    if x < 0 {
                        Slot::Outlier
                    } else {
                        Slot::Index(x as u64)
                    }
                })
                .collect(),
        )
    }

    pub fn slots(&self) -> &[Slot] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Positions of the non-outlier entries.
    pub fn inlier_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_outlier())
            .map(|(i, _)| i)
    }

    /// `(position, index)` pairs of the non-outlier entries.
    pub fn inliers(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.index().map(|x| (i, x)))
    }

    pub fn inlier_count(&self) -> usize {
        self.0.iter().filter(|s| !s.is_outlier()).count()
    }

    pub fn outlier_count(&self) -> usize {
        self.len() - self.inlier_count()
    }

    pub fn to_ints(&self) -> Vec<i64> {
        self.0.iter().map(|s| s.sort_key()).collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

/// True iff the inlier indices start at zero, strictly increase, and never
/// step by more than `n_max_gap`.
pub fn validate_assignment(a: &Assignment, n_max_gap: u64) -> bool {
    let mut prev: Option<u64> = None;
    for (_, x) in a.inliers() {
        match prev {
            None if x != 0 => return false,
            Some(p) if x <= p || x - p > n_max_gap => return false,
            _ => {}
        }
        prev = Some(x);
    }
    true
}

/// Sum of squared residuals of the inliers against the line `t * x + b`.
pub fn objective(obs: &Observations, a: &Assignment, t: f64, b: f64) -> Result<f64> {
    objective_raw(obs.toas(), a, t, b)
}

pub(crate) fn objective_raw(y: &[f64], a: &Assignment, t: f64, b: f64) -> Result<f64> {
    if y.len() != a.len() {
        return Err(Error::LengthMismatch {
            what: "assignment",
            got: a.len(),
            expected: y.len(),
        });
    }
    Ok(a.inliers()
        .map(|(i, x)| {
            let r = y[i] - (t * x as f64 + b);
            r * r
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Solved,
    NoSolution,
    RestartExhausted,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Solved => "SOLVED",
            Status::NoSolution => "NO_SOLUTION",
            Status::RestartExhausted => "RESTART_EXHAUSTED",
        })
    }
}

/// Search counters reported alongside an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes_expanded: u64,
    pub nodes_pruned: u64,
    /// Detections of the winning branch that were resolved by linear
    /// reconstruction rather than by branching.
    pub reconstructed: usize,
    /// Leading detections discarded by restarts.
    pub dropped_prefix: usize,
    pub budget_exceeded: bool,
}

/// Output of the estimator.
///
/// `t_hat`, `b_hat` and `intercept` are NaN unless `status` is
/// [`Status::Solved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t_hat: f64,
    /// Phase in the original time frame, reduced into `[0, t_hat)`.
    pub b_hat: f64,
    /// Fitted intercept in the original time frame, paired with
    /// `assignment` so that `toa ≈ x * t_hat + intercept`.
    pub intercept: f64,
    /// One entry per input detection, in ascending TOA order.
    pub assignment: Assignment,
    pub lambda_applied: u64,
    pub residual_ss: f64,
    pub restarts_used: u32,
    pub status: Status,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub(crate) fn unsolved(
        status: Status,
        n: usize,
        restarts_used: u32,
        diagnostics: Diagnostics,
    ) -> Self {
        Self {
            t_hat: f64::NAN,
            b_hat: f64::NAN,
            intercept: f64::NAN,
            assignment: Assignment(vec![Slot::Outlier; n]),
            lambda_applied: 1,
            residual_ss: f64::NAN,
            restarts_used,
            status,
            diagnostics,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == Status::Solved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: i64 = -1;

    #[test]
    fn normalize_shifts_to_zero() {
        let obs = normalize(&[5.0, 15.0, 25.0]).unwrap();
        assert_eq!(obs.toas(), &[0.0, 10.0, 20.0]);
        assert_eq!(obs.offset(), 5.0);

        let obs = normalize(&[0.0, 1.0]).unwrap();
        assert_eq!(obs.toas(), &[0.0, 1.0]);
        assert_eq!(obs.offset(), 0.0);
    }

    #[test]
    fn normalize_sorts_first() {
        let obs = normalize(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(obs.toas(), &[0.0, 1.0, 2.0]);
        assert_eq!(obs.offset(), 1.0);
    }

    #[test]
    fn normalize_rejects_short_or_nan_input() {
        assert_eq!(normalize(&[1.0]), Err(Error::TooFewToas(1)));
        assert_eq!(normalize(&[]), Err(Error::TooFewToas(0)));
        assert_eq!(normalize(&[1.0, f64::NAN]), Err(Error::NonFinite(1)));
    }

    #[test]
    fn validity() {
        assert!(validate_assignment(&Assignment::from_ints(&[0, 1, 2]), 1));
        assert!(validate_assignment(&Assignment::from_ints(&[0, O, 3]), 3));
        assert!(!validate_assignment(&Assignment::from_ints(&[0, 2, 1]), 5));
        assert!(!validate_assignment(&Assignment::from_ints(&[0, 4]), 3));
        assert!(!validate_assignment(&Assignment::from_ints(&[1, 2]), 3));
        assert!(!validate_assignment(&Assignment::from_ints(&[0, 0]), 3));
        assert!(validate_assignment(
            &Assignment::from_ints(&[O, 0, O, 2]),
            2
        ));
        assert!(validate_assignment(&Assignment::from_ints(&[O, O]), 2));
    }

    #[test]
    fn objective_values() {
        let obs = normalize(&[0.0, 10.0, 20.0]).unwrap();
        let a = Assignment::from_ints(&[0, 1, 2]);
        assert_eq!(objective(&obs, &a, 10.0, 0.0).unwrap(), 0.0);

        let obs = normalize(&[0.0, 10.0, 21.0]).unwrap();
        assert_eq!(objective(&obs, &a, 10.0, 0.0).unwrap(), 1.0);

        let obs = normalize(&[0.0, 10.0, 99.0]).unwrap();
        let a = Assignment::from_ints(&[0, 1, O]);
        assert_eq!(objective(&obs, &a, 10.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_length_mismatch() {
        let obs = normalize(&[0.0, 10.0, 20.0]).unwrap();
        let a = Assignment::from_ints(&[0, 1]);
        assert!(matches!(
            objective(&obs, &a, 10.0, 0.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hyper_params_validation() {
        assert!(HyperParams::new(1e-6, 1.0, 50, 0.1, 20.0, 100.0).is_ok());
        assert!(HyperParams::new(0.0, 1.0, 50, 0.1, 20.0, 100.0).is_err());
        assert!(HyperParams::new(1e-6, 0.0, 50, 0.1, 20.0, 100.0).is_err());
        assert!(HyperParams::new(1e-6, 1.0, 0, 0.1, 20.0, 100.0).is_err());
        assert!(HyperParams::new(1e-6, 1.0, 50, 1.0, 20.0, 100.0).is_err());
        assert!(HyperParams::new(1e-6, 1.0, 50, 0.1, 30.0, 20.0).is_err());
        let p = HyperParams::new(1e-6, 3.0, 50, 0.1, 20.0, 100.0).unwrap();
        assert!(!p.ordering_assumption_holds());
    }
}
