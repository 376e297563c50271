//! Branch rejection tests.
//!
//! Each test assumes the branch under examination is the true assignment and
//! looks for evidence against that hypothesis at significance `c`. A branch
//! is kept only if every enabled test passes.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{HyperParams, Slot};
use crate::error::{Error, Result};
use crate::statkit::{
    binomial_sf, chi2_quantile, ks_statistic, normal_quantile, OlsFit, KS_MIN_SAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Local,
    Global,
    Mae,
    OutlierCount,
    OutlierRun,
    Bounds,
    Normality,
}

impl TestKind {
    /// Evaluation order of [`is_plausible`].
    pub const ORDER: [TestKind; 7] = [
        TestKind::Local,
        TestKind::Global,
        TestKind::Mae,
        TestKind::OutlierCount,
        TestKind::OutlierRun,
        TestKind::Bounds,
        TestKind::Normality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Local => "local",
            TestKind::Global => "global",
            TestKind::Mae => "mae",
            TestKind::OutlierCount => "outlier_count",
            TestKind::OutlierRun => "outlier_run",
            TestKind::Bounds => "bounds",
            TestKind::Normality => "normality",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonferroniMode {
    /// Local test level divided by the number of fitted points.
    #[default]
    PerPoint,
    /// Additionally divided by an a-priori bound on the number of tests,
    /// for offline runs.
    GlobalBudget,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub local: bool,
    pub global: bool,
    pub mae: bool,
    pub outlier_count: bool,
    pub outlier_run: bool,
    pub bounds: bool,
    pub normality: bool,
    pub bonferroni: BonferroniMode,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            local: true,
            global: true,
            mae: true,
            outlier_count: true,
            outlier_run: true,
            bounds: true,
            normality: false,
            bonferroni: BonferroniMode::PerPoint,
        }
    }
}

impl TestConfig {
    /// Every test off. Only meaningful for exhaustive enumeration; the
    /// estimator rejects it through [`TestConfig::validate`].
    pub fn all_disabled() -> Self {
        Self {
            local: false,
            global: false,
            mae: false,
            outlier_count: false,
            outlier_run: false,
            bounds: false,
            normality: false,
            bonferroni: BonferroniMode::None,
        }
    }

    pub fn with_normality(mut self, on: bool) -> Self {
        self.normality = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.local {
            return Err(Error::InvalidParam {
                name: "tests",
                reason: "the local error test cannot be disabled".into(),
            });
        }
        Ok(())
    }

    pub fn enabled(&self, kind: TestKind) -> bool {
        match kind {
            TestKind::Local => self.local,
            TestKind::Global => self.global,
            TestKind::Mae => self.mae,
            TestKind::OutlierCount => self.outlier_count,
            TestKind::OutlierRun => self.outlier_run,
            TestKind::Bounds => self.bounds,
            TestKind::Normality => self.normality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Plausible,
    Pruned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub verdict: Verdict,
    pub failed_test: Option<TestKind>,
    statistics: [Option<f64>; 7],
}

impl TestReport {
    fn new() -> Self {
        Self {
            verdict: Verdict::Plausible,
            failed_test: None,
            statistics: [None; 7],
        }
    }

    pub fn is_plausible(&self) -> bool {
        self.verdict == Verdict::Plausible
    }

    /// Test statistic recorded for `kind`, if the test ran.
    pub fn statistic(&self, kind: TestKind) -> Option<f64> {
        self.statistics[kind.slot()]
    }

    /// Records an outcome; returns false once the report is pruned.
    fn record(&mut self, kind: TestKind, outcome: TestOutcome) -> bool {
        self.statistics[kind.slot()] = Some(outcome.statistic);
        if !outcome.passed {
            self.verdict = Verdict::Pruned;
            self.failed_test = Some(kind);
        }
        outcome.passed
    }
}

/// Result of one test together with the scalar it was decided on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub passed: bool,
    pub statistic: f64,
}

impl TestOutcome {
    fn pass(statistic: f64) -> Self {
        Self {
            passed: true,
            statistic,
        }
    }
}

/// Quantile thresholds derived from the hyper-parameters, memoised per
/// inlier count. Cheap to clone; one instance per search worker.
#[derive(Debug, Clone)]
pub struct Thresholds {
    pub c: f64,
    pub sigma_bar: f64,
    pub p_bar: f64,
    pub t_low: f64,
    pub t_high: f64,
    bonferroni: BonferroniMode,
    test_budget: f64,
    /// z_{1-c/2}
    pub z_two_sided: f64,
    /// z_{1-c}
    pub z_one_sided: f64,
    /// χ²₁(1 − c/2) σ̄², scale of the calibration inequality.
    pub calibration_q: f64,
    local_z: RefCell<Vec<f64>>,
    global_chi2: RefCell<Vec<f64>>,
}

impl Thresholds {
    /// `test_budget` is the a-priori bound on the number of tests used by
    /// [`BonferroniMode::GlobalBudget`]; ignored by the other modes.
    pub fn new(
        theta: &HyperParams,
        bonferroni: BonferroniMode,
        test_budget: usize,
    ) -> Result<Self> {
        theta.validate()?;
        let c = theta.c;
        Ok(Self {
            c,
            sigma_bar: theta.sigma_bar,
            p_bar: theta.p_bar,
            t_low: theta.t_low,
            t_high: theta.t_high,
            bonferroni,
            test_budget: test_budget.max(1) as f64,
            z_two_sided: normal_quantile(1.0 - c / 2.0)?,
            z_one_sided: normal_quantile(1.0 - c)?,
            calibration_q: chi2_quantile(1, 1.0 - c / 2.0)? * theta.sigma_bar * theta.sigma_bar,
            local_z: RefCell::new(Vec::new()),
            global_chi2: RefCell::new(Vec::new()),
        })
    }

    /// Level of the local test for a fit with `k` points.
    pub fn local_level(&self, k: usize) -> f64 {
        match self.bonferroni {
            BonferroniMode::PerPoint => self.c / k as f64,
            BonferroniMode::GlobalBudget => self.c / (k as f64 * self.test_budget),
            BonferroniMode::None => self.c,
        }
    }

    fn memo(cache: &RefCell<Vec<f64>>, k: usize, f: impl Fn(usize) -> f64) -> f64 {
        if let Some(&v) = cache.borrow().get(k) {
            if !v.is_nan() {
                return v;
            }
        }
        let v = f(k);
        let mut cache = cache.borrow_mut();
        if cache.len() <= k {
            cache.resize(k + 1, f64::NAN);
        }
        cache[k] = v;
        v
    }

    /// z_{1 − level/2} for the local test at `k` points.
    pub fn local_z(&self, k: usize) -> f64 {
        Self::memo(&self.local_z, k, |k| {
            normal_quantile(1.0 - self.local_level(k) / 2.0).expect("level in (0, 1)")
        })
    }

    /// Upper bound on the residual sum of squares of a `k`-point fit.
    pub fn global_rss_limit(&self, k: usize) -> f64 {
        Self::memo(&self.global_chi2, k, |k| {
            self.sigma_bar
                * self.sigma_bar
                * chi2_quantile(k as u64 - 2, 1.0 - self.c).expect("df >= 1")
        })
    }

    /// Upper bound on the mean absolute residual of a `k`-point fit.
    pub fn mae_limit(&self, k: usize) -> f64 {
        let two_over_pi = 2.0 / std::f64::consts::PI;
        self.sigma_bar * two_over_pi.sqrt()
            + self.z_one_sided * self.sigma_bar * ((1.0 - two_over_pi) / k as f64).sqrt()
    }
}

/// Residual summary of a prefix under its own fit.
#[derive(Debug, Clone, Default)]
struct Residuals {
    /// Largest `|r_i| / Δ_i` over the inliers.
    max_local_ratio: f64,
    rss: f64,
    sum_abs: f64,
    values: Vec<f64>,
}

fn residuals(
    y: &[f64],
    prefix: &[Slot],
    fit: &OlsFit,
    local_z: f64,
    sigma_bar: f64,
    keep: bool,
) -> Residuals {
    let t = fit.t_hat();
    let b = fit.b_hat();
    let x_bar = fit.x_bar();
    let inv_k = 1.0 / fit.k() as f64;
    let inv_ss = 1.0 / fit.ss_x();
    let scale = local_z * sigma_bar;
    let mut out = Residuals::default();
    for (i, slot) in prefix.iter().enumerate() {
        let Slot::Index(x) = *slot else { continue };
        let xf = x as f64;
        let r = y[i] - (t * xf + b);
        let u = xf - x_bar;
        let half = scale * (1.0 + inv_k + u * u * inv_ss).sqrt();
        out.max_local_ratio = out.max_local_ratio.max(r.abs() / half);
        out.rss += r * r;
        out.sum_abs += r.abs();
        if keep {
            out.values.push(r);
        }
    }
    out
}

/// Every inlier must sit inside its (Bonferroni-corrected) prediction
/// interval. Vacuous below three points.
pub fn local_error_test(y: &[f64], prefix: &[Slot], fit: &OlsFit, thr: &Thresholds) -> TestOutcome {
    if fit.k() < 3 || !fit.is_determined() {
        return TestOutcome::pass(0.0);
    }
    let r = residuals(y, prefix, fit, thr.local_z(fit.k()), thr.sigma_bar, false);
    TestOutcome {
        passed: r.max_local_ratio <= 1.0,
        statistic: r.max_local_ratio,
    }
}

/// One-sided chi-square bound on the residual sum of squares.
pub fn global_error_test(rss: f64, k: usize, thr: &Thresholds) -> TestOutcome {
    if k < 3 {
        return TestOutcome::pass(rss);
    }
    TestOutcome {
        passed: rss <= thr.global_rss_limit(k),
        statistic: rss,
    }
}

/// Mean absolute residual against the normal approximation of a mean of
/// `k` half-normal variables.
pub fn mae_test(mae: f64, k: usize, thr: &Thresholds) -> TestOutcome {
    if k < 3 {
        return TestOutcome::pass(mae);
    }
    TestOutcome {
        passed: mae <= thr.mae_limit(k),
        statistic: mae,
    }
}

/// Kolmogorov-Smirnov test of the residuals against N(0, σ̄²). Skipped
/// (passes) when disabled or with too few residuals.
pub fn normality_test(residuals: &[f64], thr: &Thresholds, enabled: bool) -> TestOutcome {
    if !enabled || residuals.len() < KS_MIN_SAMPLES {
        return TestOutcome::pass(1.0);
    }
    match ks_statistic(residuals, thr.sigma_bar) {
        Ok(Some(ks)) => TestOutcome {
            passed: ks.p_value >= thr.c,
            statistic: ks.p_value,
        },
        _ => TestOutcome::pass(1.0),
    }
}

/// Prunes when `n_outliers` or more flags among `k_plus_1` detections have
/// probability at most `c` under Binomial(k+1, p̄).
pub fn outlier_count_test(n_outliers: usize, k_plus_1: usize, thr: &Thresholds) -> TestOutcome {
    if n_outliers == 0 {
        return TestOutcome::pass(1.0);
    }
    let tail = binomial_sf(n_outliers as u64 - 1, k_plus_1 as u64, thr.p_bar);
    TestOutcome {
        passed: tail > thr.c,
        statistic: tail,
    }
}

/// Prunes when `run_length` consecutive outliers have probability below `c`.
pub fn outlier_run_test(run_length: usize, thr: &Thresholds) -> TestOutcome {
    let prob = thr.p_bar.powi(run_length as i32);
    TestOutcome {
        passed: prob >= thr.c,
        statistic: prob,
    }
}

/// The confidence interval of the slope must meet `[t_low, t_high]`.
pub fn period_bounds_test(fit: &OlsFit, thr: &Thresholds) -> TestOutcome {
    if !fit.is_determined() {
        return TestOutcome::pass(f64::NAN);
    }
    let t = fit.t_hat();
    let half = thr.z_two_sided * thr.sigma_bar / fit.ss_x().sqrt();
    TestOutcome {
        passed: t + half >= thr.t_low && t - half <= thr.t_high,
        statistic: t,
    }
}

/// Number of outliers in `prefix` and the length of its trailing outlier run.
pub fn outlier_tally(prefix: &[Slot]) -> (usize, usize) {
    let count = prefix.iter().filter(|s| s.is_outlier()).count();
    let run = prefix.iter().rev().take_while(|s| s.is_outlier()).count();
    (count, run)
}

/// Runs the enabled tests in [`TestKind::ORDER`], stopping at the first
/// failure. `fit` must be the fit of the inliers of `prefix`.
pub fn is_plausible(
    y: &[f64],
    prefix: &[Slot],
    fit: &OlsFit,
    thr: &Thresholds,
    cfg: &TestConfig,
) -> TestReport {
    let mut report = TestReport::new();
    let k = fit.k();
    let fitted = k >= 3 && fit.is_determined();
    let need_pass = fitted && (cfg.local || cfg.global || cfg.mae || cfg.normality);
    let res = if need_pass {
        let keep = cfg.normality && k >= KS_MIN_SAMPLES;
        residuals(y, prefix, fit, thr.local_z(k), thr.sigma_bar, keep)
    } else {
        Residuals::default()
    };

    if cfg.local {
        let outcome = if fitted {
            TestOutcome {
                passed: res.max_local_ratio <= 1.0,
                statistic: res.max_local_ratio,
            }
        } else {
            TestOutcome::pass(0.0)
        };
        if !report.record(TestKind::Local, outcome) {
            return report;
        }
    }
    if cfg.global && !report.record(TestKind::Global, global_error_test(res.rss, k, thr)) {
        return report;
    }
    if cfg.mae {
        let mae = if k > 0 { res.sum_abs / k as f64 } else { 0.0 };
        if !report.record(TestKind::Mae, mae_test(mae, k, thr)) {
            return report;
        }
    }
    if cfg.outlier_count || cfg.outlier_run {
        let (count, run) = outlier_tally(prefix);
        if cfg.outlier_count
            && !report.record(
                TestKind::OutlierCount,
                outlier_count_test(count, prefix.len(), thr),
            )
        {
            return report;
        }
        if cfg.outlier_run && !report.record(TestKind::OutlierRun, outlier_run_test(run, thr)) {
            return report;
        }
    }
    if cfg.bounds && !report.record(TestKind::Bounds, period_bounds_test(fit, thr)) {
        return report;
    }
    if cfg.normality {
        report.record(TestKind::Normality, normality_test(&res.values, thr, true));
    }
    report
}

/// Tests that apply when the newest detection is flagged as an outlier: the
/// fit is unchanged, so only the outlier tallies can move.
pub fn outlier_flag_plausible(
    count: usize,
    run: usize,
    prefix_len: usize,
    thr: &Thresholds,
    cfg: &TestConfig,
) -> Option<TestKind> {
    if cfg.outlier_count && !outlier_count_test(count, prefix_len, thr).passed {
        return Some(TestKind::OutlierCount);
    }
    if cfg.outlier_run && !outlier_run_test(run, thr).passed {
        return Some(TestKind::OutlierRun);
    }
    None
}
