//! Seeded benchmark trials and parameter sweeps.
//!
//! A trial draws a period, phase and sparsity from its seed, generates a
//! train, runs the estimator and grades the result. Sweeps vary one axis and
//! reuse the same trial seeds at every point.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::HyperParams;
use crate::error::Result;
use crate::pipeline::{estimate_period, EstimatorConfig};
use crate::synth::{crlb_t, generate, score, GenParams, OutlierMode, Score};

/// Stream offset so the parameter draws never share a sequence with the
/// generator seeded by the same trial seed.
const PARAM_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// How the noise level of a trial is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    Absolute(f64),
    /// Standard deviation as a fraction of the drawn period.
    RelativeToPeriod(f64),
}

/// Outlier bound used when none is given: 0.1 below 10% contamination,
/// 0.2 from there on.
pub fn default_p_bar(outlier_fraction: f64) -> f64 {
    if outlier_fraction < 0.1 {
        0.1
    } else {
        0.2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub horizon: u64,
    /// Fixed sparsity, or `None` to draw it uniformly from `[0.2, 1]`.
    pub gamma: Option<f64>,
    /// Range the true period is drawn from.
    pub t_range: (f64, f64),
    pub noise: Noise,
    pub sigma_bar_over_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_mode: OutlierMode,
    pub c: f64,
    pub n_max: u64,
    pub p_bar: Option<f64>,
    /// Period bounds handed to the estimator.
    pub t_bounds: (f64, f64),
    pub restarts: u32,
    pub normality: bool,
    pub node_budget: Option<u64>,
    pub time_budget: Duration,
}

impl Default for TrialSetup {
    fn default() -> Self {
        Self {
            horizon: 1000,
            gamma: None,
            t_range: (20.0, 100.0),
            noise: Noise::Absolute(1.0),
            sigma_bar_over_sigma: 1.0,
            outlier_fraction: 0.05,
            outlier_mode: OutlierMode::UpTo,
            c: 1e-6,
            n_max: 50,
            p_bar: None,
            t_bounds: (20.0, 100.0),
            restarts: 2,
            normality: false,
            node_budget: Some(crate::search::DEFAULT_NODE_BUDGET),
            time_budget: Duration::from_secs(60),
        }
    }
}

impl TrialSetup {
    /// Generator parameters for one seed.
    pub fn gen_params(&self, seed: u64) -> GenParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PARAM_STREAM);
        let t_true = if self.t_range.0 < self.t_range.1 {
            rng.random_range(self.t_range.0..self.t_range.1)
        } else {
            self.t_range.0
        };
        let b_true = rng.random_range(0.0..t_true);
        let gamma = self.gamma.unwrap_or_else(|| rng.random_range(0.2..=1.0));
        let sigma = match self.noise {
            Noise::Absolute(s) => s,
            Noise::RelativeToPeriod(r) => r * t_true,
        };
        GenParams {
            t_true,
            b_true,
            sigma,
            gamma,
            horizon: self.horizon,
            outlier_fraction: self.outlier_fraction,
            outlier_mode: self.outlier_mode,
            seed,
        }
    }

    pub fn hyper_params(&self, sigma: f64) -> Result<HyperParams> {
        let p_bar = self
            .p_bar
            .unwrap_or_else(|| default_p_bar(self.outlier_fraction));
        // A noiseless train still needs a positive noise bound.
        let sigma_bar = (self.sigma_bar_over_sigma * sigma).max(1e-9 * self.t_bounds.0);
        let mut theta = HyperParams::new(
            self.c,
            sigma_bar,
            self.n_max,
            p_bar,
            self.t_bounds.0,
            self.t_bounds.1,
        )?;
        theta.restart_cap = self.restarts;
        theta.normality_test_enabled = self.normality;
        Ok(theta)
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            node_budget: self.node_budget,
            time_budget: Some(self.time_budget),
            ..EstimatorConfig::default()
        }
    }
}

/// One row of the benchmark CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis_value: f64,
    pub seed: u64,
    pub t_true: f64,
    pub b_true: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
    pub gamma: f64,
    pub horizon: u64,
    pub outlier_fraction: f64,
    pub p_bar: f64,
    pub n_detections: usize,
    pub n_outliers_true: usize,
    pub t_hat: Option<f64>,
    pub b_hat: Option<f64>,
    pub status: String,
    pub restarts: u32,
    pub outliers_flagged: usize,
    pub lambda: u64,
    pub outcome: String,
    pub rel_error: Option<f64>,
    /// Cramér-Rao bound of the period, relative to the true period.
    pub crlb_rel: Option<f64>,
    pub wall_time_s: f64,
    pub nodes_expanded: u64,
    pub nodes_pruned: u64,
    pub reconstructed: usize,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.outcome == "success"
    }
}

/// Runs one seeded trial.
pub fn run_trial(setup: &TrialSetup, seed: u64) -> Result<TrialRecord> {
    let params = setup.gen_params(seed);
    let (toas, truth) = generate(&params)?;
    let theta = setup.hyper_params(params.sigma)?;
    let config = setup.estimator_config();

    let started = Instant::now();
    let est = estimate_period(&toas, &theta, &config)?;
    let wall = started.elapsed();

    let graded = score(&est, &truth, params.sigma, wall, setup.time_budget);
    let (outcome, rel_error) = match graded {
        Score::Success { rel_error } => ("success".to_string(), Some(rel_error)),
        Score::Fail(reason) => (reason.name().to_string(), None),
    };
    let crlb_rel = crlb_t(&truth.assignment(), params.sigma)
        .ok()
        .map(|c| c / params.t_true);
    let finite = |v: f64| v.is_finite().then_some(v);

    Ok(TrialRecord {
        axis_value: f64::NAN,
        seed,
        t_true: params.t_true,
        b_true: params.b_true,
        sigma: params.sigma,
        sigma_bar: theta.sigma_bar,
        gamma: params.gamma,
        horizon: params.horizon,
        outlier_fraction: params.outlier_fraction,
        p_bar: theta.p_bar,
        n_detections: toas.len(),
        n_outliers_true: truth.outliers.len(),
        t_hat: finite(est.t_hat),
        b_hat: finite(est.b_hat),
        status: est.status.to_string(),
        restarts: est.restarts_used,
        outliers_flagged: if est.is_solved() {
            est.assignment.outlier_count()
        } else {
            0
        },
        lambda: est.lambda_applied,
        outcome,
        rel_error,
        crlb_rel,
        wall_time_s: wall.as_secs_f64(),
        nodes_expanded: est.diagnostics.nodes_expanded,
        nodes_pruned: est.diagnostics.nodes_pruned,
        reconstructed: est.diagnostics.reconstructed,
    })
}

/// Runs `trials` seeds starting at `seed_base` on the current rayon pool.
/// Records come back in seed order.
pub fn run_trials(setup: &TrialSetup, seed_base: u64, trials: u64) -> Result<Vec<TrialRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(setup, seed_base.wrapping_add(i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    OutlierPct,
    SigmaOverT,
    Gamma,
    SigmaBarOverSigma,
}

impl Axis {
    pub const ALL: [Axis; 4] = [
        Axis::OutlierPct,
        Axis::SigmaOverT,
        Axis::Gamma,
        Axis::SigmaBarOverSigma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::OutlierPct => "outlier_pct",
            Axis::SigmaOverT => "sigma_over_t",
            Axis::Gamma => "gamma",
            Axis::SigmaBarOverSigma => "sigma_bar_over_sigma",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::OutlierPct => vec![0.0, 0.05, 0.1, 0.15, 0.2],
            Axis::SigmaOverT => vec![0.005, 0.01, 0.02, 0.03, 0.05],
            Axis::Gamma => vec![0.2, 0.4, 0.6, 0.8, 1.0],
            Axis::SigmaBarOverSigma => vec![1.0, 2.0, 5.0, 10.0],
        }
    }

    /// Applies one axis value to a base setup.
    pub fn apply(self, base: &TrialSetup, value: f64, explicit_p_bar: Option<f64>) -> TrialSetup {
        let mut s = base.clone();
        match self {
            Axis::OutlierPct => {
                s.outlier_fraction = value;
                s.p_bar = explicit_p_bar.or(Some(default_p_bar(value)));
            }
            Axis::SigmaOverT => s.noise = Noise::RelativeToPeriod(value),
            Axis::Gamma => s.gamma = Some(value),
            Axis::SigmaBarOverSigma => s.sigma_bar_over_sigma = value,
        }
        s
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown axis `{s}`, expected one of outlier_pct, sigma_over_t, gamma, sigma_bar_over_sigma"))
    }
}

/// Per-point summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub axis_value: f64,
    pub trials: usize,
    pub success_rate: f64,
    /// Root mean square of the relative error over successful trials.
    pub rel_rmse: Option<f64>,
    /// `rel_rmse` over the mean relative Cramér-Rao bound of the same trials.
    pub rmse_over_crlb: Option<f64>,
    pub median_time_s: Option<f64>,
    pub p90_time_s: Option<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    Some(sorted[idx])
}

/// Summary of records sharing one axis value.
pub fn summarize(axis_value: f64, records: &[TrialRecord]) -> PointSummary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.is_success()).collect();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.rel_error).collect();
    let crlbs: Vec<f64> = ok.iter().filter_map(|r| r.crlb_rel).collect();
    let rel_rmse = (!errs.is_empty())
        .then(|| (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt());
    let mean_crlb = (!crlbs.is_empty()).then(|| crlbs.iter().sum::<f64>() / crlbs.len() as f64);
    let rmse_over_crlb = match (rel_rmse, mean_crlb) {
        (Some(r), Some(c)) if c > 0.0 => Some(r / c),
        _ => None,
    };
    let mut times: Vec<f64> = records.iter().map(|r| r.wall_time_s).collect();
    times.sort_by(f64::total_cmp);
    PointSummary {
        axis_value,
        trials: records.len(),
        success_rate: if records.is_empty() {
            0.0
        } else {
            ok.len() as f64 / records.len() as f64
        },
        rel_rmse,
        rmse_over_crlb,
        median_time_s: quantile(&times, 0.5),
        p90_time_s: quantile(&times, 0.9),
    }
}

/// Groups records by axis value, in order of first appearance.
pub fn summarize_all(records: &[TrialRecord]) -> Vec<PointSummary> {
    let mut values: Vec<f64> = Vec::new();
    for r in records {
        if !values.iter().any(|v| v.to_bits() == r.axis_value.to_bits()) {
            values.push(r.axis_value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let group: Vec<TrialRecord> = records
                .iter()
                .filter(|r| r.axis_value.to_bits() == v.to_bits())
                .cloned()
                .collect();
            summarize(v, &group)
        })
        .collect()
}

/// Runs every point of a sweep with the same trial seeds.
pub fn sweep(
    base: &TrialSetup,
    axis: Axis,
    values: &[f64],
    explicit_p_bar: Option<f64>,
    seed_base: u64,
    trials: u64,
) -> Result<Vec<TrialRecord>> {
    let mut all = Vec::new();
    for &v in values {
        let setup = axis.apply(base, v, explicit_p_bar);
        let mut recs = run_trials(&setup, seed_base, trials)?;
        for r in &mut recs {
            r.axis_value = v;
        }
        all.extend(recs);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrialSetup {
        TrialSetup {
            horizon: 120,
            gamma: Some(0.6),
            noise: Noise::RelativeToPeriod(0.01),
            outlier_fraction: 0.0,
            time_budget: Duration::from_secs(30),
            ..TrialSetup::default()
        }
    }

    #[test]
    fn p_bar_rule() {
        assert_eq!(default_p_bar(0.0), 0.1);
        assert_eq!(default_p_bar(0.05), 0.1);
        assert_eq!(default_p_bar(0.1), 0.2);
        assert_eq!(default_p_bar(0.2), 0.2);
    }

    #[test]
    fn axis_names_round_trip() {
        for a in Axis::ALL {
            assert_eq!(a.name().parse::<Axis>().unwrap(), a);
        }
        assert!("period".parse::<Axis>().is_err());
    }

    #[test]
    fn params_are_seeded() {
        let s = TrialSetup::default();
        assert_eq!(s.gen_params(4), s.gen_params(4));
        let p = s.gen_params(4);
        assert!((20.0..100.0).contains(&p.t_true));
        assert!((0.0..p.t_true).contains(&p.b_true));
        assert!((0.2..=1.0).contains(&p.gamma));
    }

    #[test]
    fn trial_runs_and_succeeds() {
        let r = run_trial(&small(), 3).unwrap();
        assert!(r.is_success(), "{r:?}");
        assert!(r.rel_error.unwrap() < 1e-3);
    }

    #[test]
    fn summary_of_handmade_records() {
        let mut r = run_trial(&small(), 3).unwrap();
        r.rel_error = Some(0.02);
        r.crlb_rel = Some(0.01);
        r.wall_time_s = 1.0;
        let mut f = r.clone();
        f.outcome = "no_solution".into();
        f.rel_error = None;
        f.wall_time_s = 3.0;
        let s = summarize(0.5, &[r.clone(), r, f]);
        assert_eq!(s.trials, 3);
        assert!((s.success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.rel_rmse.unwrap() - 0.02).abs() < 1e-15);
        assert!((s.rmse_over_crlb.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(s.median_time_s, Some(1.0));
        assert_eq!(s.p90_time_s, Some(3.0));
    }

    #[test]
    fn empty_summary() {
        let s = summarize(0.0, &[]);
        assert_eq!(s.trials, 0);
        assert_eq!(s.rel_rmse, None);
        assert_eq!(s.median_time_s, None);
    }
}
