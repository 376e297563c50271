//! Synthetic pulse trains, the Cramér-Rao bound of the period, and trial
//! scoring for benchmarks.
//!
//! Every index of the horizon consumes one uniform draw for detection and one
//! normal draw for noise whether or not it is kept, so two parameter sets that
//! differ only in `sigma` share their detection pattern and noise shape.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, Estimate, Slot, Status};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Uniform count between zero and the fraction times the pulse count.
    #[default]
    UpTo,
    /// Exactly the fraction times the pulse count, rounded down.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub t_true: f64,
    pub b_true: f64,
    pub sigma: f64,
    /// Detection probability of each pulse.
    pub gamma: f64,
    /// Number of pulse slots drawn.
    pub horizon: u64,
    pub outlier_fraction: f64,
    pub outlier_mode: OutlierMode,
    pub seed: u64,
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.into(),
            })
        };
        if !(self.t_true > 0.0 && self.t_true.is_finite()) {
            return bad("t_true", "must be positive");
        }
        if !self.b_true.is_finite() {
            return bad("b_true", "must be finite");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if self.horizon < 2 {
            return bad("horizon", "must be at least 2");
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction.is_finite()) {
            return bad("outlier_fraction", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_true: f64,
    pub b_true: f64,
    /// Absolute pulse index of each emitted TOA, `None` for outliers.
    pub x_true: Vec<Option<u64>>,
    /// Positions of the outliers among the emitted TOAs.
    pub outliers: Vec<usize>,
    /// Draws discarded because fewer than two pulses were detected.
    pub regenerated: u32,
}

impl GroundTruth {
    /// True assignment with indices counted from the first detected pulse.
    pub fn assignment(&self) -> Assignment {
        let first = self.x_true.iter().flatten().min().copied().unwrap_or(0);
        Assignment::new(
            self.x_true
                .iter()
                .map(|x| x.map_or(Slot::Outlier, |x| Slot::Index(x - first)))
                .collect(),
        )
    }

    pub fn inlier_count(&self) -> usize {
        self.x_true.len() - self.outliers.len()
    }
}

/// Draws a pulse train with uniformly placed outliers, sorted by time.
pub fn generate(params: &GenParams) -> Result<(Vec<f64>, GroundTruth)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut regenerated = 0;
    loop {
        let mut pulses = Vec::new();
        for i in 0..params.horizon {
            let keep = rng.random::<f64>() < params.gamma;
            let z: f64 = rng.sample(StandardNormal);
            if keep {
                pulses.push((
                    i as f64 * params.t_true + params.b_true + params.sigma * z,
                    Some(i),
                ));
            }
        }
        if pulses.len() < 2 {
            regenerated += 1;
            continue;
        }

        let cap = (params.outlier_fraction * pulses.len() as f64).floor() as usize;
        let count = match params.outlier_mode {
            OutlierMode::UpTo => rng.random_range(0..=cap),
            OutlierMode::Exact => cap,
        };
        let y_n = pulses.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let hi = y_n.max(0.0);
        let mut all = pulses;
        for _ in 0..count {
            all.push((rng.random_range(0.0..=hi), None));
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0));

        let toas = all.iter().map(|p| p.0).collect();
        let x_true: Vec<Option<u64>> = all.iter().map(|p| p.1).collect();
        let outliers = x_true
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_none())
            .map(|(i, _)| i)
            .collect();
        return Ok((
            toas,
            GroundTruth {
                t_true: params.t_true,
                b_true: params.b_true,
                x_true,
                outliers,
                regenerated,
            },
        ));
    }
}

/// Standard deviation bound `σ / √SS_x` of the least-squares period for the
/// inliers of `a`.
pub fn crlb_t(a: &Assignment, sigma: f64) -> Result<f64> {
    let xs: Vec<i128> = a.inliers().map(|(_, x)| x as i128).collect();
    let k = xs.len() as i128;
    let sum: i128 = xs.iter().sum();
    let sum_sq: i128 = xs.iter().map(|x| x * x).sum();
    let num = k * sum_sq - sum * sum;
    if k < 2 || num <= 0 {
        return Err(Error::DegenerateFit);
    }
    let ss_x = num as f64 / k as f64;
    Ok(sigma / ss_x.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    NoSolution,
    Timeout,
    Submultiple,
}

impl FailReason {
    pub fn name(self) -> &'static str {
        match self {
            FailReason::NoSolution => "no_solution",
            FailReason::Timeout => "timeout",
            FailReason::Submultiple => "submultiple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Success { rel_error: f64 },
    Fail(FailReason),
}

impl Score {
    pub fn is_success(&self) -> bool {
        matches!(self, Score::Success { .. })
    }
}

/// Tolerance for calling an estimate a submultiple of the true period.
pub fn submultiple_tolerance(truth: &GroundTruth, sigma: f64) -> f64 {
    let crlb = crlb_t(&truth.assignment(), sigma).unwrap_or(0.0);
    (4.0 * crlb).max(1e-9 * truth.t_true)
}

/// Grades one trial. A run fails when it found nothing, overran its time
/// budget, or returned the true period divided by an integer `k ≥ 2`.
pub fn score(
    estimate: &Estimate,
    truth: &GroundTruth,
    sigma: f64,
    wall_time: Duration,
    budget: Duration,
) -> Score {
    if estimate.status != Status::Solved || !estimate.t_hat.is_finite() {
        return Score::Fail(FailReason::NoSolution);
    }
    if wall_time > budget {
        return Score::Fail(FailReason::Timeout);
    }
    let t_hat = estimate.t_hat;
    let k = (truth.t_true / t_hat).round();
    if t_hat > 0.0
        && k >= 2.0
        && (truth.t_true - k * t_hat).abs() < submultiple_tolerance(truth, sigma)
    {
        return Score::Fail(FailReason::Submultiple);
    }
    Score::Success {
        rel_error: (t_hat - truth.t_true).abs() / truth.t_true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Diagnostics;
    use crate::statkit::binomial_sf;

    fn params() -> GenParams {
        GenParams {
            t_true: 10.0,
            b_true: 0.0,
            sigma: 0.0,
            gamma: 1.0,
            horizon: 5,
            outlier_fraction: 0.0,
            outlier_mode: OutlierMode::UpTo,
            seed: 1,
        }
    }

    fn solved(t_hat: f64) -> Estimate {
        let mut e = Estimate::unsolved(Status::Solved, 3, 0, Diagnostics::default());
        e.t_hat = t_hat;
        e
    }

    #[test]
    fn dense_noiseless_train() {
        let (toas, truth) = generate(&params()).unwrap();
        assert_eq!(toas, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        assert_eq!(truth.assignment().to_ints(), vec![0, 1, 2, 3, 4]);
        assert!(truth.outliers.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = GenParams {
            sigma: 0.3,
            gamma: 0.4,
            horizon: 300,
            outlier_fraction: 0.1,
            seed: 99,
            ..params()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let q = GenParams {
            seed: 100,
            ..p.clone()
        };
        assert_ne!(generate(&p).unwrap().0, generate(&q).unwrap().0);
    }

    #[test]
    fn noiseless_inliers_lie_on_the_grid() {
        let p = GenParams {
            t_true: 37.5,
            b_true: 4.25,
            gamma: 0.3,
            horizon: 400,
            outlier_fraction: 0.2,
            seed: 5,
            ..params()
        };
        let (toas, truth) = generate(&p).unwrap();
        let y_n = toas
            .iter()
            .zip(&truth.x_true)
            .filter(|(_, x)| x.is_some())
            .map(|(t, _)| *t)
            .fold(0.0, f64::max);
        for (t, x) in toas.iter().zip(&truth.x_true) {
            match x {
                Some(i) => assert_eq!(*t, *i as f64 * 37.5 + 4.25),
                None => assert!((0.0..=y_n).contains(t)),
            }
        }
        assert!(truth.outliers.len() as f64 <= 0.2 * truth.inlier_count() as f64);
    }

    #[test]
    fn exact_outlier_mode() {
        let p = GenParams {
            gamma: 0.5,
            horizon: 400,
            outlier_fraction: 0.1,
            outlier_mode: OutlierMode::Exact,
            ..params()
        };
        let (_, truth) = generate(&p).unwrap();
        assert_eq!(truth.outliers.len(), truth.inlier_count() / 10);
    }

    #[test]
    fn detection_count_within_binomial_bounds() {
        // Smallest symmetric window holding 99.99% of Binomial(1000, 0.5).
        let mut lo = 500u64;
        while binomial_sf(lo - 1, 1000, 0.5) < 1.0 - 0.5e-4 {
            lo -= 1;
        }
        let hi = 1000 - lo;
        for seed in 0..50 {
            let p = GenParams {
                gamma: 0.5,
                horizon: 1000,
                seed,
                ..params()
            };
            let n = generate(&p).unwrap().0.len() as u64;
            assert!(
                (lo..=hi).contains(&n),
                "seed {seed}: {n} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn too_sparse_draws_are_regenerated() {
        let p = GenParams {
            gamma: 0.01,
            horizon: 20,
            ..params()
        };
        let (toas, truth) = generate(&p).unwrap();
        assert!(toas.len() >= 2);
        assert!(truth.regenerated > 0);
    }

    #[test]
    fn crlb_examples() {
        let a = Assignment::from_ints(&[0, 1, 2]);
        assert!((crlb_t(&a, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(crlb_t(&a, 0.0).unwrap(), 0.0);
        let xs: Vec<i64> = (0..100).collect();
        let c = crlb_t(&Assignment::from_ints(&xs), 1.0).unwrap();
        assert!((c - 1.0 / 83325f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            crlb_t(&Assignment::from_ints(&[0, -1]), 1.0),
            Err(Error::DegenerateFit)
        );
    }

    #[test]
    fn scoring() {
        let (_, truth) = generate(&params()).unwrap();
        let budget = Duration::from_secs(60);
        let fast = Duration::from_millis(1);
        assert_eq!(
            score(&solved(10.0), &truth, 0.1, fast, budget),
            Score::Success { rel_error: 0.0 }
        );
        assert_eq!(
            score(&solved(5.0), &truth, 0.1, fast, budget),
            Score::Fail(FailReason::Submultiple)
        );
        assert_eq!(
            score(&solved(10.0 / 3.0), &truth, 0.1, fast, budget),
            Score::Fail(FailReason::Submultiple)
        );
        assert_eq!(
            score(&solved(10.0), &truth, 0.1, budget * 2, budget),
            Score::Fail(FailReason::Timeout)
        );
        let none = Estimate::unsolved(Status::NoSolution, 5, 0, Diagnostics::default());
        assert_eq!(
            score(&none, &truth, 0.1, fast, budget),
            Score::Fail(FailReason::NoSolution)
        );
        assert!(score(&solved(10.5), &truth, 0.1, fast, budget).is_success());
    }
}
