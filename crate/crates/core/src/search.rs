//! Depth-first search over index assignments.
//!
//! A node of the tree fixes the indices of the first `j` detections. Its
//! children are the indices the next detection can take according to the
//! calibration interval of the current fit, each kept only if the extended
//! branch passes the plausibility tests. When no child survives the detection
//! is flagged as an outlier instead. Once the fit pins the next index to a
//! single integer the branch switches to linear reconstruction, which resolves
//! detections one at a time without branching.
//!
//! The search runs on an explicit stack and can be suspended when it runs out
//! of detections, which is what the online estimator relies on.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::calibration::{
    clip_candidates, discrimination_interval_with, prediction_halfwidth_with, CandidateRange,
};
use crate::domain::{Assignment, HyperParams, Slot};
use crate::error::Result;
use crate::plausibility::{
    is_plausible, outlier_flag_plausible, BonferroniMode, TestConfig, TestKind, Thresholds,
};
use crate::statkit::OlsFit;

/// Default cap on node expansions per estimation run.
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

/// One node of the search tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    prefix: Vec<Slot>,
    fit: OlsFit,
    last_inlier: (u64, f64),
    outlier_run: usize,
    outlier_count: usize,
    reconstructed: usize,
}

impl BranchState {
    /// Branch `(0, x2)` over the first two detections.
    pub fn root(y: &[f64], x2: u64) -> Self {
        let mut fit = OlsFit::new();
        fit.push(0, y[0]);
        fit.push(x2, y[1]);
        Self {
            prefix: vec![Slot::Index(0), Slot::Index(x2)],
            fit,
            last_inlier: (x2, y[1]),
            outlier_run: 0,
            outlier_count: 0,
            reconstructed: 0,
        }
    }

    /// Branch holding an arbitrary prefix of `y`, with the fit and outlier
    /// tallies rebuilt from scratch. Returns `None` unless the prefix starts
    /// with an inlier at index 0 followed by a second inlier.
    pub fn from_prefix(y: &[f64], slots: &[Slot]) -> Option<Self> {
        if slots.len() > y.len() || slots.first() != Some(&Slot::Index(0)) {
            return None;
        }
        let mut fit = OlsFit::new();
        let mut last = None;
        let mut run = 0;
        let mut count = 0;
        for (s, &v) in slots.iter().zip(y) {
            match s {
                Slot::Index(x) => {
                    fit.push(*x, v);
                    last = Some((*x, v));
                    run = 0;
                }
                Slot::Outlier => {
                    run += 1;
                    count += 1;
                }
            }
        }
        if fit.k() < 2 {
            return None;
        }
        Some(Self {
            prefix: slots.to_vec(),
            fit,
            last_inlier: last?,
            outlier_run: run,
            outlier_count: count,
            reconstructed: 0,
        })
    }

    /// Position of the next detection to explain.
    pub fn next_index(&self) -> usize {
        self.prefix.len()
    }

    pub fn prefix(&self) -> &[Slot] {
        &self.prefix
    }

    pub fn fit(&self) -> &OlsFit {
        &self.fit
    }

    pub fn outlier_run(&self) -> usize {
        self.outlier_run
    }

    pub fn outlier_count(&self) -> usize {
        self.outlier_count
    }

    /// Detections of this branch resolved by linear reconstruction.
    pub fn reconstructed(&self) -> usize {
        self.reconstructed
    }

    pub fn last_inlier_index(&self) -> u64 {
        self.last_inlier.0
    }

    pub fn assignment(&self) -> Assignment {
        Assignment::new(self.prefix.clone())
    }

    fn push_inlier(&mut self, x: u64, y: f64) -> (u64, f64) {
        let prev = self.last_inlier;
        self.prefix.push(Slot::Index(x));
        self.fit.push(x, y);
        self.last_inlier = (x, y);
        prev
    }

    fn pop_inlier(&mut self, prev: (u64, f64)) {
        let (x, y) = self.last_inlier;
        self.prefix.pop();
        self.fit.pop(x, y);
        self.last_inlier = prev;
    }

    fn push_outlier(&mut self) {
        self.prefix.push(Slot::Outlier);
        self.outlier_run += 1;
        self.outlier_count += 1;
    }

    fn inlier_added(&mut self) {
        self.outlier_run = 0;
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub tests: TestConfig,
    /// Restrict children to the calibration interval. When off, every index
    /// in the gap window is a candidate.
    pub calibrate: bool,
    /// Allow switching to linear reconstruction.
    pub precision_gate: bool,
    pub node_budget: Option<u64>,
    pub deadline: Option<Instant>,
    /// Raised by another worker once it has found a leaf.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tests: TestConfig::default(),
            calibrate: true,
            precision_gate: true,
            node_budget: Some(DEFAULT_NODE_BUDGET),
            deadline: None,
            cancel: None,
        }
    }
}

impl SearchConfig {
    /// Every candidate accepted, no calibration and no reconstruction: the
    /// search then walks the whole outlier-free assignment space.
    pub fn exhaustive() -> Self {
        Self {
            tests: TestConfig::all_disabled(),
            calibrate: false,
            precision_gate: false,
            node_budget: None,
            deadline: None,
            cancel: None,
        }
    }
}

/// Hyper-parameters, search switches and memoised thresholds.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub theta: HyperParams,
    pub config: SearchConfig,
    pub thresholds: Thresholds,
}

impl SearchContext {
    pub fn new(theta: &HyperParams, config: SearchConfig) -> Result<Self> {
        Self::with_test_budget(theta, config, 1)
    }

    pub fn with_test_budget(
        theta: &HyperParams,
        mut config: SearchConfig,
        test_budget: usize,
    ) -> Result<Self> {
        config.tests.normality |= theta.normality_test_enabled;
        let thresholds = Thresholds::new(theta, config.tests.bonferroni, test_budget)?;
        Ok(Self {
            theta: theta.clone(),
            config,
            thresholds,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub nodes_pruned: u64,
    pub pruned_by: [u64; 7],
    pub max_depth: usize,
    /// Detections resolved by linear reconstruction, over all branches.
    pub reconstruction_steps: u64,
    /// Position at which the returned leaf entered linear reconstruction.
    pub reconstruction_start: Option<usize>,
    pub budget_exceeded: bool,
}

impl SearchStats {
    fn prune(&mut self, kind: Option<TestKind>) {
        self.nodes_pruned += 1;
        if let Some(kind) = kind {
            self.pruned_by[kind as usize] += 1;
        }
    }

    pub fn pruned(&self, kind: TestKind) -> u64 {
        self.pruned_by[kind as usize]
    }

    pub fn merge(&mut self, other: &SearchStats) {
        self.nodes_expanded += other.nodes_expanded;
        self.nodes_pruned += other.nodes_pruned;
        for (a, b) in self.pruned_by.iter_mut().zip(other.pruned_by) {
            *a += b;
        }
        self.max_depth = self.max_depth.max(other.max_depth);
        self.reconstruction_steps += other.reconstruction_steps;
        self.budget_exceeded |= other.budget_exceeded;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchStatus {
    Leaf(BranchState),
    Exhausted { budget_exceeded: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub status: SearchStatus,
    pub stats: SearchStats,
}

impl SearchOutcome {
    pub fn leaf(&self) -> Option<&BranchState> {
        match &self.status {
            SearchStatus::Leaf(b) => Some(b),
            SearchStatus::Exhausted { .. } => None,
        }
    }
}

/// How far a call to [`Search::run`] got.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    /// The branch on top of the stack explains every detection seen so far.
    Leaf,
    Exhausted,
    BudgetExceeded,
}

/// True when the calibration interval for `y_next` is narrower than one half,
/// so at most one index can explain it.
pub fn precise_enough(fit: &OlsFit, y_next: f64, sigma_bar: f64, c: f64) -> Result<bool> {
    let q = crate::calibration::calibration_scale(sigma_bar, c)?;
    Ok(precise_enough_with(fit, y_next, q))
}

fn precise_enough_with(fit: &OlsFit, y_next: f64, q: f64) -> bool {
    if fit.k() < 3 || !fit.is_determined() {
        return false;
    }
    discrimination_interval_with(fit, y_next, q).width < 0.5
}

/// Children of `branch` for detection `branch.next_index()`, smallest index
/// first. A lone outlier child is produced when no index is plausible; an
/// empty list means the branch is dead.
pub fn expand(
    branch: BranchState,
    y: &[f64],
    ctx: &SearchContext,
    stats: &mut SearchStats,
) -> Vec<BranchState> {
    let mut branch = branch;
    let j = branch.next_index();
    let yj = y[j];
    let thr = &ctx.thresholds;
    let tests = &ctx.config.tests;

    let range = if ctx.config.calibrate && branch.fit.is_determined() {
        discrimination_interval_with(&branch.fit, yj, thr.calibration_q)
    } else {
        CandidateRange::unbounded()
    };
    let candidates = clip_candidates(range, branch.last_inlier.0, ctx.theta.n_max_gap);

    let mut children = Vec::new();
    for v in candidates.indices() {
        let prev = branch.push_inlier(v as u64, yj);
        let report = is_plausible(&y[..=j], &branch.prefix, &branch.fit, thr, tests);
        if report.is_plausible() {
            let mut child = branch.clone();
            child.inlier_added();
            children.push(child);
        } else {
            stats.prune(report.failed_test);
        }
        branch.pop_inlier(prev);
    }

    if children.is_empty() {
        branch.push_outlier();
        match outlier_flag_plausible(
            branch.outlier_count,
            branch.outlier_run,
            branch.prefix.len(),
            thr,
            tests,
        ) {
            None => children.push(branch),
            Some(kind) => stats.prune(Some(kind)),
        }
    }
    children
}

/// Resolves detection `branch.next_index()` by rounding against the current
/// period estimate. Returns false when the branch dies.
fn reconstruct_step(
    branch: &mut BranchState,
    y: &[f64],
    ctx: &SearchContext,
    stats: &mut SearchStats,
) -> bool {
    let j = branch.next_index();
    let yj = y[j];
    let (x_prev, y_prev) = branch.last_inlier;
    let fit = &branch.fit;
    let steps = ((yj - y_prev) / fit.t_hat()).round();

    if steps >= 1.0 && steps <= ctx.theta.n_max_gap as f64 {
        let x = x_prev + steps as u64;
        let half = prediction_halfwidth_with(
            fit,
            x as f64,
            ctx.theta.sigma_bar,
            ctx.thresholds.z_two_sided,
        );
        if (yj - fit.predict(x as f64)).abs() <= half {
            branch.push_inlier(x, yj);
            branch.inlier_added();
            branch.reconstructed += 1;
            stats.reconstruction_steps += 1;
            return true;
        }
    }

    branch.push_outlier();
    if let Some(kind) = outlier_flag_plausible(
        branch.outlier_count,
        branch.outlier_run,
        branch.prefix.len(),
        &ctx.thresholds,
        &ctx.config.tests,
    ) {
        stats.prune(Some(kind));
        return false;
    }
    branch.reconstructed += 1;
    stats.reconstruction_steps += 1;
    true
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    /// Every detection is explained.
    Leaf(BranchState),
    /// An outlier test failed.
    Dead,
    /// The next detection is ambiguous again and needs branching.
    Handoff(BranchState),
}

/// Resolves the remaining detections in linear time while each of them has
/// an unambiguous index; outliers are flagged through the local prediction
/// interval.
pub fn linear_reconstruction(
    branch: BranchState,
    y: &[f64],
    ctx: &SearchContext,
) -> (Reconstruction, SearchStats) {
    let mut branch = branch;
    let mut stats = SearchStats::default();
    loop {
        if branch.next_index() == y.len() {
            return (Reconstruction::Leaf(branch), stats);
        }
        if !precise_enough_with(
            &branch.fit,
            y[branch.next_index()],
            ctx.thresholds.calibration_q,
        ) {
            return (Reconstruction::Handoff(branch), stats);
        }
        if !reconstruct_step(&mut branch, y, ctx, &mut stats) {
            return (Reconstruction::Dead, stats);
        }
    }
}

/// Resumable depth-first search.
#[derive(Debug, Clone, Default)]
pub struct Search {
    stack: Vec<BranchState>,
    stats: SearchStats,
}

impl Search {
    /// Initial branches are explored in the given order.
    pub fn new(initial: Vec<BranchState>) -> Self {
        let mut stack = initial;
        stack.reverse();
        Self {
            stack,
            stats: SearchStats::default(),
        }
    }

    pub fn stats(&self) -> &SearchStats {
        &self.stats
    }

    /// Branch on top of the stack, which is the leaf after
    /// [`Progress::Leaf`].
    pub fn top(&self) -> Option<&BranchState> {
        self.stack.last()
    }

    pub fn pending(&self) -> usize {
        self.stack.len()
    }

    fn over_budget(&self, ctx: &SearchContext) -> bool {
        if let Some(budget) = ctx.config.node_budget {
            if self.stats.nodes_expanded >= budget {
                return true;
            }
        }
        if self.stats.nodes_expanded.is_multiple_of(256) {
            if let Some(deadline) = ctx.config.deadline {
                if Instant::now() >= deadline {
                    return true;
                }
            }
            if let Some(cancel) = &ctx.config.cancel {
                if cancel.load(Ordering::Relaxed) {
                    return true;
                }
            }
        }
        false
    }

    /// Advances until the top branch explains all of `y`, the stack empties,
    /// or a budget runs out. Calling again after appending to `y` resumes
    /// from the suspended leaf.
    pub fn run(&mut self, y: &[f64], ctx: &SearchContext) -> Progress {
        while let Some(mut branch) = self.stack.pop() {
            loop {
                let j = branch.next_index();
                self.stats.max_depth = self.stats.max_depth.max(j);
                if j == y.len() {
                    self.stats.reconstruction_start = None;
                    self.stack.push(branch);
                    return Progress::Leaf;
                }
                if ctx.config.precision_gate
                    && precise_enough_with(&branch.fit, y[j], ctx.thresholds.calibration_q)
                {
                    if reconstruct_step(&mut branch, y, ctx, &mut self.stats) {
                        continue;
                    }
                    break;
                }
                if self.over_budget(ctx) {
                    self.stats.budget_exceeded = true;
                    self.stack.push(branch);
                    return Progress::BudgetExceeded;
                }
                self.stats.nodes_expanded += 1;
                let mut children = expand(branch, y, ctx, &mut self.stats).into_iter();
                let Some(first) = children.next() else { break };
                let rest: Vec<_> = children.collect();
                self.stack.extend(rest.into_iter().rev());
                branch = first;
            }
        }
        Progress::Exhausted
    }

    /// Runs to completion collecting every leaf instead of stopping at the
    /// first one. Only sensible on tiny instances.
    pub fn collect_leaves(&mut self, y: &[f64], ctx: &SearchContext) -> Vec<BranchState> {
        let mut leaves = Vec::new();
        loop {
            match self.run(y, ctx) {
                Progress::Leaf => leaves.push(self.stack.pop().expect("leaf on top")),
                Progress::Exhausted | Progress::BudgetExceeded => return leaves,
            }
        }
    }
}

/// Single-threaded depth-first search returning the first leaf.
pub fn dfs(y: &[f64], initial: Vec<BranchState>, ctx: &SearchContext) -> SearchOutcome {
    let mut search = Search::new(initial);
    let progress = search.run(y, ctx);
    let status = match progress {
        Progress::Leaf => SearchStatus::Leaf(search.stack.pop().expect("leaf on top")),
        Progress::Exhausted => SearchStatus::Exhausted {
            budget_exceeded: false,
        },
        Progress::BudgetExceeded => SearchStatus::Exhausted {
            budget_exceeded: true,
        },
    };
    SearchOutcome {
        status,
        stats: search.stats,
    }
}

/// Explores the initial branches on the rayon pool, one sequential search
/// per branch; whichever leaf is found first wins. The result need not be
/// the leaf the sequential search would return.
pub fn dfs_parallel(
    y: &[f64],
    initial: Vec<BranchState>,
    theta: &HyperParams,
    config: &SearchConfig,
    test_budget: usize,
) -> Result<SearchOutcome> {
    let cancel = Arc::new(AtomicBool::new(false));
    let mut worker_config = config.clone();
    worker_config.cancel = Some(cancel.clone());
    // Build once to surface parameter errors before fanning out.
    SearchContext::with_test_budget(theta, worker_config.clone(), test_budget)?;

    let results: Vec<SearchOutcome> = initial
        .into_par_iter()
        .map(|branch| {
            let ctx = SearchContext::with_test_budget(theta, worker_config.clone(), test_budget)
                .expect("validated above");
            if cancel.load(Ordering::Relaxed) {
                return SearchOutcome {
                    status: SearchStatus::Exhausted {
                        budget_exceeded: false,
                    },
                    stats: SearchStats::default(),
                };
            }
            let outcome = dfs(y, vec![branch], &ctx);
            if outcome.leaf().is_some() {
                cancel.store(true, Ordering::Relaxed);
            }
            outcome
        })
        .collect();

    let mut stats = SearchStats::default();
    let mut leaf = None;
    let mut budget_exceeded = false;
    for outcome in results {
        stats.merge(&outcome.stats);
        match outcome.status {
            SearchStatus::Leaf(b) if leaf.is_none() => leaf = Some(b),
            SearchStatus::Leaf(_) => {}
            // Workers stopped by the cancel flag report a budget stop.
            SearchStatus::Exhausted { budget_exceeded: b } => budget_exceeded |= b,
        }
    }
    let status = match leaf {
        Some(b) => SearchStatus::Leaf(b),
        None => SearchStatus::Exhausted { budget_exceeded },
    };
    Ok(SearchOutcome { status, stats })
}

/// Largest `λ ≥ 2` such that the inlier indices of `x_star` are, on
/// average, nearly multiples of `λ`; 1 if there is none. Candidates run up
/// to the largest step between consecutive inliers.
pub fn biggest_approx_divisor(x_star: &Assignment, p_bar: f64) -> u64 {
    biggest_approx_divisor_capped(x_star, p_bar, u64::MAX)
}

/// [`biggest_approx_divisor`] restricted to `λ ≤ max_lambda`.
pub fn biggest_approx_divisor_capped(x_star: &Assignment, p_bar: f64, max_lambda: u64) -> u64 {
    let xs: Vec<u64> = x_star.inliers().map(|(_, x)| x).collect();
    if xs.len() < 2 {
        return 1;
    }
    let max_gap = xs
        .windows(2)
        .map(|w| w[1].abs_diff(w[0]))
        .max()
        .unwrap_or(0);
    let top = max_gap.min(max_lambda);
    let m = xs.len() as f64;
    (2..=top)
        .rev()
        .find(|&lambda| xs.iter().map(|&x| (x % lambda) as f64).sum::<f64>() / m < p_bar)
        .unwrap_or(1)
}

/// Like [`biggest_approx_divisor_capped`], but the indices may cluster on any
/// residue class `r` modulo `λ` rather than only on multiples of `λ`. That
/// happens when the detection anchoring index 0 is spurious. Returns
/// `(λ, r)`, with `(1, 0)` when no `λ ≥ 2` qualifies; residue 0 is preferred
/// on ties.
pub fn biggest_approx_divisor_shifted(
    x_star: &Assignment,
    p_bar: f64,
    max_lambda: u64,
) -> (u64, u64) {
    let xs: Vec<u64> = x_star.inliers().map(|(_, x)| x).collect();
    if xs.len() < 2 {
        return (1, 0);
    }
    let max_gap = xs
        .windows(2)
        .map(|w| w[1].abs_diff(w[0]))
        .max()
        .unwrap_or(0);
    let top = max_gap.min(max_lambda);
    let m = xs.len() as f64;
    for lambda in (2..=top).rev() {
        let mut hist = vec![0u64; lambda as usize];
        for &x in &xs {
            hist[(x % lambda) as usize] += 1;
        }
        let mean_for = |r: u64| {
            hist.iter()
                .enumerate()
                .map(|(s, &c)| (c * ((s as u64 + lambda - r) % lambda)) as f64)
                .sum::<f64>()
                / m
        };
        let best = (0..lambda)
            .map(|r| (mean_for(r), r))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((mean, r)) = best {
            if mean < p_bar {
                return (lambda, r);
            }
        }
    }
    (1, 0)
}

/// Bonferroni budget for offline runs over `n` detections.
pub(crate) fn test_budget_for(mode: BonferroniMode, n: usize) -> usize {
    match mode {
        BonferroniMode::GlobalBudget => n.max(1),
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::prediction_halfwidth;

    fn theta(sigma_bar: f64, t_low: f64) -> HyperParams {
        HyperParams::new(1e-6, sigma_bar, 50, 0.1, t_low, 100.0).unwrap()
    }

    fn ctx(theta: &HyperParams) -> SearchContext {
        SearchContext::new(theta, SearchConfig::default()).unwrap()
    }

    fn ints(b: &BranchState) -> Vec<i64> {
        b.assignment().to_ints()
    }

    #[test]
    fn noiseless_branch_has_one_child() {
        let y = [0.0, 10.0, 20.0];
        let c = ctx(&theta(0.01, 8.0));
        let mut stats = SearchStats::default();
        let kids = expand(BranchState::root(&y, 1), &y, &c, &mut stats);
        assert_eq!(kids.len(), 1);
        assert_eq!(ints(&kids[0]), vec![0, 1, 2]);
    }

    #[test]
    fn off_grid_detection_becomes_outlier() {
        let y = [0.0, 10.0, 15.0, 20.0];
        let c = ctx(&theta(0.01, 8.0));
        let mut stats = SearchStats::default();
        let kids = expand(BranchState::root(&y, 1), &y, &c, &mut stats);
        assert_eq!(kids.len(), 1);
        assert_eq!(ints(&kids[0]), vec![0, 1, -1]);
        assert_eq!(kids[0].outlier_run(), 1);
        let kids = expand(kids[0].clone(), &y, &c, &mut stats);
        assert_eq!(ints(&kids[0]), vec![0, 1, -1, 2]);
        assert_eq!(kids[0].outlier_run(), 0);
        assert_eq!(kids[0].outlier_count(), 1);
    }

    #[test]
    fn complete_branch_is_a_leaf_without_expansion() {
        let y = [0.0, 10.0];
        let c = ctx(&theta(0.01, 8.0));
        let out = dfs(&y, vec![BranchState::root(&y, 1)], &c);
        assert_eq!(out.stats.nodes_expanded, 0);
        assert_eq!(ints(out.leaf().unwrap()), vec![0, 1]);
    }

    #[test]
    fn noiseless_train_yields_true_assignment() {
        let xs = [0u64, 1, 3, 4, 7, 8, 9, 12];
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| 3.0 + 10.0 * x as f64)
            .map(|v| v - 3.0)
            .collect();
        let c = ctx(&theta(0.01, 8.0));
        let out = dfs(&y, vec![BranchState::root(&y, 1)], &c);
        assert_eq!(
            ints(out.leaf().unwrap()),
            xs.iter().map(|&x| x as i64).collect::<Vec<_>>()
        );
    }

    #[test]
    fn smallest_step_leaf_comes_first() {
        let y = [0.0, 10.0, 20.0, 30.0, 40.0];
        let c = ctx(&theta(0.01, 4.0));
        let init = vec![BranchState::root(&y, 1), BranchState::root(&y, 2)];
        let leaves = Search::new(init.clone()).collect_leaves(&y, &c);
        let found: Vec<Vec<i64>> = leaves.iter().map(ints).collect();
        assert!(found.contains(&vec![0, 1, 2, 3, 4]));
        assert!(found.contains(&vec![0, 2, 4, 6, 8]));
        let out = dfs(&y, init, &c);
        assert_eq!(ints(out.leaf().unwrap()), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dead_branches_exhaust() {
        let y = [0.0, 10.0, 15.0];
        let mut th = theta(0.01, 8.0);
        th.p_bar = 0.0;
        let out = dfs(&y, vec![BranchState::root(&y, 1)], &ctx(&th));
        assert_eq!(
            out.status,
            SearchStatus::Exhausted {
                budget_exceeded: false
            }
        );
        assert_eq!(out.stats.nodes_pruned, 1);
    }

    #[test]
    fn node_budget_stops_search() {
        let y = [0.0, 10.0, 20.0, 30.0];
        let config = SearchConfig {
            node_budget: Some(0),
            ..SearchConfig::default()
        };
        let c = SearchContext::new(&theta(0.01, 8.0), config).unwrap();
        let out = dfs(&y, vec![BranchState::root(&y, 1)], &c);
        assert_eq!(
            out.status,
            SearchStatus::Exhausted {
                budget_exceeded: true
            }
        );
    }

    #[test]
    fn precision_gate() {
        let two = OlsFit::from_points([(0, 0.0), (1, 10.0)]);
        assert!(!precise_enough(&two, 20.0, 0.01, 1e-6).unwrap());
        let many = OlsFit::from_points((0..30).map(|x| (x, 10.0 * x as f64)));
        assert!(precise_enough(&many, 300.0, 0.01, 1e-6).unwrap());
        assert!(!precise_enough(&many, 300.0, 2.5, 1e-6).unwrap());
        let q = crate::calibration::calibration_scale(2.5, 1e-6).unwrap();
        assert!(discrimination_interval_with(&many, 300.0, q).width >= 0.5);
    }

    // One reconstruction step taken directly, since at this noise level the
    // precision gate would not open.
    fn reconstruction_case(next: f64) -> (Option<BranchState>, BranchState) {
        let mut y: Vec<f64> = (0..29).map(|x| 10.0 * x as f64).collect();
        y.push(290.1);
        y.push(next);
        let slots: Vec<Slot> = (0..30).map(Slot::Index).collect();
        let branch = BranchState::from_prefix(&y, &slots).unwrap();
        let c = ctx(&theta(0.5, 8.0));
        let mut b = branch.clone();
        let mut stats = SearchStats::default();
        let alive = reconstruct_step(&mut b, &y, &c, &mut stats);
        (alive.then_some(b), branch)
    }

    #[test]
    fn reconstruction_rounds_to_the_grid() {
        let (b, _) = reconstruction_case(320.0);
        let b = b.unwrap();
        assert_eq!(b.prefix().last(), Some(&Slot::Index(32)));
        assert_eq!(b.reconstructed(), 1);
    }

    #[test]
    fn reconstruction_flags_points_outside_the_prediction_interval() {
        let mut flagged = 0;
        for next in [320.0, 323.0, 324.9, 326.0, 328.0, 334.0] {
            let (b, branch) = reconstruction_case(next);
            let fit = branch.fit();
            let x = 29 + ((next - 290.1) / fit.t_hat()).round() as u64;
            let half = prediction_halfwidth(fit, x as f64, 0.5, 1e-6).unwrap();
            let inlier = (next - fit.predict(x as f64)).abs() <= half;
            let last = *b.unwrap().prefix().last().unwrap();
            assert_eq!(last == Slot::Index(x), inlier, "next={next}");
            assert_eq!(last == Slot::Outlier, !inlier, "next={next}");
            flagged += usize::from(!inlier);
        }
        assert!(flagged >= 1);
    }

    #[test]
    fn reconstruction_completes_precise_train() {
        let xs: Vec<u64> = (0..40).filter(|x| x % 7 != 3).collect();
        let mut y: Vec<f64> = xs
            .iter()
            .map(|&x| 10.0 * x as f64 + 0.01 * ((x * 37 % 11) as f64 - 5.0))
            .collect();
        y.insert(20, y[19] + 4.0);
        let prefix: Vec<Slot> = xs[..4].iter().map(|&x| Slot::Index(x)).collect();
        let branch = BranchState::from_prefix(&y, &prefix).unwrap();
        let (r, stats) = linear_reconstruction(branch, &y, &ctx(&theta(0.05, 8.0)));
        let Reconstruction::Leaf(b) = r else {
            panic!("{r:?}")
        };
        assert_eq!(stats.reconstruction_steps as usize, y.len() - 4);
        let mut want: Vec<Slot> = xs.iter().map(|&x| Slot::Index(x)).collect();
        want.insert(20, Slot::Outlier);
        assert_eq!(b.prefix(), &want[..]);
    }

    #[test]
    fn reconstruction_hands_back_when_imprecise() {
        let y = [0.0, 10.0, 20.0, 30.0];
        let branch = BranchState::root(&y, 1);
        let (r, _) = linear_reconstruction(branch, &y, &ctx(&theta(0.01, 8.0)));
        assert!(matches!(r, Reconstruction::Handoff(b) if b.next_index() == 2));
    }

    #[test]
    fn from_prefix_tallies() {
        let y = [0.0, 10.0, 13.0, 20.0, 26.0, 27.0];
        let slots = [
            Slot::Index(0),
            Slot::Index(1),
            Slot::Outlier,
            Slot::Index(2),
            Slot::Outlier,
            Slot::Outlier,
        ];
        let b = BranchState::from_prefix(&y, &slots).unwrap();
        assert_eq!(
            (b.outlier_count(), b.outlier_run(), b.last_inlier_index()),
            (3, 2, 2)
        );
        assert_eq!(
            b.fit(),
            &OlsFit::from_points([(0, 0.0), (1, 10.0), (2, 20.0)])
        );
        assert!(BranchState::from_prefix(&y, &[Slot::Index(1), Slot::Index(2)]).is_none());
        assert!(BranchState::from_prefix(&y, &[Slot::Index(0), Slot::Outlier]).is_none());
    }

    #[test]
    fn divisor_examples() {
        assert_eq!(
            biggest_approx_divisor(&Assignment::from_ints(&[0, 2, 4, 6]), 0.01),
            2
        );
        assert_eq!(
            biggest_approx_divisor(&Assignment::from_ints(&[0, 2, 4, 6, 8, 3]), 0.2),
            2
        );
        assert_eq!(
            biggest_approx_divisor(&Assignment::from_ints(&[0, 1, 2, 3]), 0.1),
            1
        );
        assert_eq!(
            biggest_approx_divisor(&Assignment::from_ints(&[0, 3, 6, 12]), 0.01),
            3
        );
        assert_eq!(
            biggest_approx_divisor_capped(&Assignment::from_ints(&[0, 6, 12, 18]), 0.01, 3),
            3
        );
        assert_eq!(
            biggest_approx_divisor(&Assignment::from_ints(&[0, -1]), 0.5),
            1
        );
    }

    #[test]
    fn shifted_divisor_finds_offset_classes() {
        // Spurious anchor at 0, true pulses on 1 + 3k.
        let a = Assignment::from_ints(&[0, 1, 4, 7, 13, 16]);
        assert_eq!(biggest_approx_divisor(&a, 0.4), 1);
        assert_eq!(biggest_approx_divisor_shifted(&a, 0.4, u64::MAX), (3, 1));
        assert_eq!(biggest_approx_divisor_shifted(&a, 0.4, 2), (1, 0));
        // Agrees with the plain test when the class is 0.
        let a = Assignment::from_ints(&[0, 2, 4, 6, 8, 3]);
        assert_eq!(biggest_approx_divisor_shifted(&a, 0.2, u64::MAX), (2, 0));
        let a = Assignment::from_ints(&[0, 1, 2, 3]);
        assert_eq!(biggest_approx_divisor_shifted(&a, 0.1, u64::MAX), (1, 0));
    }
}
