//! End-to-end estimation: initial branches, search, restarts and the final
//! refit, in batch or online form.
//!
//! Batch estimation is an online session that is fed every detection before
//! being finished, so both modes return the same estimate for the same data
//! as long as the search is single-threaded and no global Bonferroni budget
//! is in use.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{normalize, Assignment, Diagnostics, Estimate, HyperParams, Slot, Status};
use crate::error::{Error, Result};
use crate::plausibility::{is_plausible, TestConfig};
use crate::search::{
    biggest_approx_divisor_shifted, dfs_parallel, test_budget_for, BranchState, Progress, Search,
    SearchConfig, SearchContext, SearchStats, SearchStatus, DEFAULT_NODE_BUDGET,
};

/// Detections dropped from the front of the data on every restart.
pub const RESTART_DROP: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub tests: TestConfig,
    /// Restrict branching to the calibration interval.
    pub calibrate: bool,
    /// Switch to linear reconstruction once the index of the next detection
    /// is unambiguous.
    pub precision_gate: bool,
    /// Node expansions allowed per search, `None` for no limit.
    pub node_budget: Option<u64>,
    /// Wall-clock limit measured from the start of the session.
    pub time_budget: Option<Duration>,
    /// Worker threads for batch searches; 1 keeps the result deterministic.
    pub threads: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            tests: TestConfig::default(),
            calibrate: true,
            precision_gate: true,
            node_budget: Some(DEFAULT_NODE_BUDGET),
            time_budget: None,
            threads: 1,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.tests.validate()?;
        if self.threads == 0 {
            return Err(Error::InvalidParam {
                name: "threads",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn search_config(&self, deadline: Option<Instant>) -> SearchConfig {
        SearchConfig {
            tests: self.tests.clone(),
            calibrate: self.calibrate,
            precision_gate: self.precision_gate,
            node_budget: self.node_budget,
            deadline,
            cancel: None,
        }
    }
}

/// Branches `(0, v)` for every first step `v` that the period bounds and the
/// gap limit allow and that passes the plausibility tests, in increasing `v`.
pub fn initialize(y: &[f64], ctx: &SearchContext) -> Vec<BranchState> {
    if y.len() < 2 {
        return Vec::new();
    }
    let n_max = ctx.theta.n_max_gap;
    let reach = (y[1] / ctx.theta.t_low).floor();
    let upper = if reach >= n_max as f64 {
        n_max
    } else if reach >= 1.0 {
        reach as u64
    } else {
        0
    };
    (1..=upper)
        .map(|v| BranchState::root(y, v))
        .filter(|b| {
            is_plausible(
                &y[..2],
                b.prefix(),
                b.fit(),
                &ctx.thresholds,
                &ctx.config.tests,
            )
            .is_plausible()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    /// Fewer than two usable detections so far.
    Waiting,
    /// Every detection so far is explained.
    Solved,
    Failed(Status),
}

/// Incremental estimator. Detections must arrive in non-decreasing order.
#[derive(Debug, Clone)]
pub struct Session {
    ctx: SearchContext,
    config: EstimatorConfig,
    online: bool,
    raw: Vec<f64>,
    /// Detections dropped by restarts.
    start: usize,
    /// `raw[start..]` shifted so that the first entry is zero.
    work: Vec<f64>,
    search: Option<Search>,
    restarts_used: u32,
    state: SessionState,
    spent: SearchStats,
}

impl Session {
    /// Online session with no data yet.
    pub fn new(theta: &HyperParams, config: EstimatorConfig) -> Result<Self> {
        Self::build(theta, config, true, 1)
    }

    fn build(
        theta: &HyperParams,
        config: EstimatorConfig,
        online: bool,
        test_budget: usize,
    ) -> Result<Self> {
        theta.validate()?;
        config.validate()?;
        let deadline = config.time_budget.map(|d| Instant::now() + d);
        let ctx =
            SearchContext::with_test_budget(theta, config.search_config(deadline), test_budget)?;
        Ok(Self {
            ctx,
            config,
            online,
            raw: Vec::new(),
            start: 0,
            work: Vec::new(),
            search: None,
            restarts_used: 0,
            state: SessionState::Waiting,
            spent: SearchStats::default(),
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn restarts_used(&self) -> u32 {
        self.restarts_used
    }

    /// Adds one detection and advances the search. Returns the estimate for
    /// the data seen so far when every detection is explained.
    pub fn feed_observation(&mut self, toa: f64) -> Result<Option<Estimate>> {
        if !toa.is_finite() {
            return Err(Error::NonFinite(self.raw.len()));
        }
        if let Some(&last) = self.raw.last() {
            if toa < last {
                return Err(Error::OutOfOrder { new: toa, last });
            }
        }
        self.raw.push(toa);
        self.sync_work();
        self.advance();
        Ok(self.current())
    }

    /// Estimate for the data seen so far, if the search currently has a leaf.
    pub fn current(&self) -> Option<Estimate> {
        match self.state {
            SessionState::Solved => self
                .search
                .as_ref()
                .and_then(|s| s.top())
                .map(|leaf| self.build_estimate(leaf)),
            _ => None,
        }
    }

    /// Final estimate. A session still waiting for data, including one whose
    /// restarts left fewer than two detections, reports no solution.
    pub fn finish(self) -> Estimate {
        if let Some(est) = self.current() {
            return est;
        }
        let status = match self.state {
            SessionState::Failed(s) => s,
            _ => Status::NoSolution,
        };
        Estimate::unsolved(
            status,
            self.raw.len(),
            self.restarts_used,
            self.diagnostics(None),
        )
    }

    fn sync_work(&mut self) {
        while self.start + self.work.len() < self.raw.len() {
            let offset = self.raw[self.start];
            let y = self.raw[self.start + self.work.len()] - offset;
            self.work.push(y);
        }
    }

    fn restart_or_fail(&mut self) {
        if let Some(search) = self.search.take() {
            self.spent.merge(search.stats());
        }
        if self.restarts_used < self.ctx.theta.restart_cap {
            self.restarts_used += 1;
            self.start += RESTART_DROP;
            self.work.clear();
            self.sync_work();
            self.state = SessionState::Waiting;
        } else {
            self.state = SessionState::Failed(Status::RestartExhausted);
        }
    }

    fn advance(&mut self) {
        loop {
            if let SessionState::Failed(_) = self.state {
                return;
            }
            if self.search.is_none() {
                if self.work.len() < 2 {
                    self.state = SessionState::Waiting;
                    return;
                }
                let initial = initialize(&self.work, &self.ctx);
                if initial.is_empty() {
                    self.restart_or_fail();
                    continue;
                }
                if !self.online && self.config.threads > 1 {
                    self.search_parallel(initial);
                    continue;
                }
                self.search = Some(Search::new(initial));
            }
            let search = self.search.as_mut().expect("search present");
            match search.run(&self.work, &self.ctx) {
                Progress::Leaf => {
                    self.state = SessionState::Solved;
                    return;
                }
                Progress::Exhausted => self.restart_or_fail(),
                Progress::BudgetExceeded => {
                    self.state = SessionState::Failed(Status::NoSolution);
                    return;
                }
            }
        }
    }

    fn search_parallel(&mut self, initial: Vec<BranchState>) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build();
        let (work, theta, config, budget) = (
            &self.work,
            &self.ctx.theta,
            &self.ctx.config,
            self.test_budget(),
        );
        let run = || dfs_parallel(work, initial, theta, config, budget);
        let outcome = match pool {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
        .expect("parameters validated at session start");
        match outcome.status {
            SearchStatus::Leaf(leaf) => {
                // Leave a one-branch search holding the leaf.
                let mut search = Search::new(vec![leaf]);
                search.run(&self.work, &self.ctx);
                self.spent.merge(&outcome.stats);
                self.search = Some(search);
                self.state = SessionState::Solved;
            }
            SearchStatus::Exhausted {
                budget_exceeded: true,
            } => {
                self.spent.merge(&outcome.stats);
                self.state = SessionState::Failed(Status::NoSolution);
            }
            SearchStatus::Exhausted {
                budget_exceeded: false,
            } => {
                self.spent.merge(&outcome.stats);
                self.restart_or_fail();
            }
        }
    }

    fn test_budget(&self) -> usize {
        if self.online {
            1
        } else {
            test_budget_for(self.ctx.config.tests.bonferroni, self.raw.len())
        }
    }

    fn diagnostics(&self, leaf: Option<&BranchState>) -> Diagnostics {
        let mut stats = self.spent.clone();
        if let Some(search) = &self.search {
            stats.merge(search.stats());
        }
        Diagnostics {
            nodes_expanded: stats.nodes_expanded,
            nodes_pruned: stats.nodes_pruned,
            reconstructed: leaf.map_or(0, |b| b.reconstructed()),
            dropped_prefix: self.start.min(self.raw.len()),
            budget_exceeded: stats.budget_exceeded,
        }
    }

    fn build_estimate(&self, leaf: &BranchState) -> Estimate {
        let theta = &self.ctx.theta;
        let offset = self.raw[self.start];
        let rel: Vec<f64> = self.raw.iter().map(|&t| t - offset).collect();

        let mut slots = vec![Slot::Outlier; self.start];
        slots.extend_from_slice(leaf.prefix());
        let found = Assignment::new(slots);

        // A leaf whose indices nearly all fall in one residue class modulo
        // some λ is a submultiple of the period; divide it out unless that
        // would push the period past its upper bound.
        let fit = leaf.fit();
        let t0 = fit.t_hat();
        let slack = self.ctx.thresholds.z_two_sided * theta.sigma_bar / fit.ss_x().sqrt();
        let max_lambda = ((theta.t_high + slack) / t0).floor().max(1.0);
        let max_lambda = if max_lambda >= u64::MAX as f64 {
            u64::MAX
        } else {
            max_lambda as u64
        };
        let (lambda, residue) = biggest_approx_divisor_shifted(&found, theta.p_bar, max_lambda);

        let divided = (lambda > 1).then(|| divide_assignment(&found, lambda, residue));
        let (assignment, lambda, line) = match divided
            .as_ref()
            .and_then(|a| refit(&rel, a).map(|l| (a, l)))
        {
            Some((a, l)) => (a.clone(), lambda, l),
            None => match refit(&rel, &found) {
                Some(l) => (found, 1, l),
                None => {
                    return Estimate::unsolved(
                        Status::NoSolution,
                        self.raw.len(),
                        self.restarts_used,
                        self.diagnostics(Some(leaf)),
                    )
                }
            },
        };

        let intercept = line.intercept + offset;
        Estimate {
            t_hat: line.slope,
            b_hat: intercept.rem_euclid(line.slope),
            intercept,
            assignment,
            lambda_applied: lambda,
            residual_ss: line.rss,
            restarts_used: self.restarts_used,
            status: Status::Solved,
            diagnostics: self.diagnostics(Some(leaf)),
        }
    }
}

/// Keeps the indices congruent to `residue` modulo `lambda`, divided down and
/// shifted so the first kept index is 0; the rest become outliers.
fn divide_assignment(a: &Assignment, lambda: u64, residue: u64) -> Assignment {
    let kept = |x: u64| x >= residue && (x - residue).is_multiple_of(lambda);
    let base = a
        .inliers()
        .map(|(_, x)| x)
        .find(|&x| kept(x))
        .unwrap_or(residue);
    Assignment::new(
        a.slots()
            .iter()
            .map(|s| match s.index() {
                Some(x) if kept(x) => Slot::Index((x - base) / lambda),
                _ => Slot::Outlier,
            })
            .collect(),
    )
}

struct Line {
    slope: f64,
    intercept: f64,
    rss: f64,
}

/// Two-pass least squares over the inliers of `a`.
fn refit(y: &[f64], a: &Assignment) -> Option<Line> {
    let pts: Vec<(f64, f64)> = a.inliers().map(|(p, x)| (x as f64, y[p])).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    Some(Line {
        slope,
        intercept,
        rss,
    })
}

/// Estimates period and phase from a batch of TOAs in any order.
pub fn estimate_period(
    toas: &[f64],
    theta: &HyperParams,
    config: &EstimatorConfig,
) -> Result<Estimate> {
    let obs = normalize(toas)?;
    let budget = test_budget_for(config.tests.bonferroni, obs.len());
    let mut session = Session::build(theta, config.clone(), false, budget)?;
    let mut sorted = toas.to_vec();
    sorted.sort_by(f64::total_cmp);
    session.raw = sorted;
    session.sync_work();
    session.advance();
    Ok(session.finish())
}
