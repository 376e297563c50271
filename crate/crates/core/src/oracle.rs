//! Brute-force reference solver for tiny instances.
//!
//! Walks every valid assignment, fits each one by least squares and keeps the
//! smallest residual sum of squares whose slope lies inside the period
//! bounds. Exponential in the number of detections, so the enumeration is
//! fenced by hard limits.

use crate::domain::{Assignment, HyperParams, Slot};
use crate::error::{Error, Result};

pub const MAX_DETECTIONS: usize = 10;
pub const MAX_GAP: u64 = 4;
pub const MAX_OUTLIERS: usize = 2;

fn check_rails(n: usize, n_max_gap: u64, max_outliers: usize) -> Result<()> {
    if n > MAX_DETECTIONS {
        return Err(Error::GuardRail(format!(
            "{n} detections, at most {MAX_DETECTIONS} allowed"
        )));
    }
    if n_max_gap > MAX_GAP {
        return Err(Error::GuardRail(format!(
            "gap limit {n_max_gap}, at most {MAX_GAP} allowed"
        )));
    }
    if max_outliers > MAX_OUTLIERS {
        return Err(Error::GuardRail(format!(
            "{max_outliers} outliers, at most {MAX_OUTLIERS} allowed"
        )));
    }
    Ok(())
}

/// Calls `f` on every valid assignment of length `n` with at most
/// `max_outliers` outliers and at least one inlier, in lexicographic order
/// (outlier before any index).
pub fn for_each_assignment(
    n: usize,
    n_max_gap: u64,
    max_outliers: usize,
    mut f: impl FnMut(&[Slot]),
) -> Result<()> {
    check_rails(n, n_max_gap, max_outliers)?;
    let mut slots = Vec::with_capacity(n);
    walk(n, n_max_gap, max_outliers, None, &mut slots, &mut f);
    Ok(())
}

fn walk(
    n: usize,
    gap: u64,
    outliers_left: usize,
    last: Option<u64>,
    slots: &mut Vec<Slot>,
    f: &mut impl FnMut(&[Slot]),
) {
    if slots.len() == n {
        if last.is_some() {
            f(slots);
        }
        return;
    }
    if outliers_left > 0 {
        slots.push(Slot::Outlier);
        walk(n, gap, outliers_left - 1, last, slots, f);
        slots.pop();
    }
    let next = match last {
        None => 0..=0,
        Some(x) => x + 1..=x + gap,
    };
    for x in next {
        slots.push(Slot::Index(x));
        walk(n, gap, outliers_left, Some(x), slots, f);
        slots.pop();
    }
}

pub fn enumerate_assignments(
    n: usize,
    n_max_gap: u64,
    max_outliers: usize,
) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for_each_assignment(n, n_max_gap, max_outliers, |s| {
        out.push(Assignment::new(s.to_vec()))
    })?;
    Ok(out)
}

/// Closed-form size of the enumeration: choose the outlier positions, then
/// every inlier after the first picks one of `n_max_gap` steps.
pub fn assignment_count(n: usize, n_max_gap: u64, max_outliers: usize) -> u128 {
    (0..=max_outliers.min(n.saturating_sub(1)))
        .map(|o| binomial(n, o) * (n_max_gap as u128).pow((n - o - 1) as u32))
        .sum()
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub assignment: Assignment,
    pub t: f64,
    pub b: f64,
    pub objective: f64,
}

/// Least-squares line through the inliers; `None` with fewer than two
/// distinct indices.
pub fn fit_assignment(y: &[f64], slots: &[Slot]) -> Option<(f64, f64, f64)> {
    let mut m = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (s, &v) in slots.iter().zip(y) {
        if let Slot::Index(x) = s {
            m += 1.0;
            sx += *x as f64;
            sy += v;
        }
    }
    if m < 2.0 {
        return None;
    }
    let (xm, ym) = (sx / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (s, &v) in slots.iter().zip(y) {
        if let Slot::Index(x) = s {
            let dx = *x as f64 - xm;
            sxx += dx * dx;
            sxy += dx * (v - ym);
        }
    }
    if sxx <= 0.0 {
        return None;
    }
    let t = sxy / sxx;
    let b = ym - t * xm;
    let rss = slots
        .iter()
        .zip(y)
        .filter_map(|(s, &v)| s.index().map(|x| (v - t * x as f64 - b).powi(2)))
        .sum();
    Some((t, b, rss))
}

/// Exhaustive minimiser of the residual sum of squares over assignments with
/// at most `max_outliers` outliers. `y` must be sorted. Objectives within a
/// relative `1e-12` of the spread of `y` count as ties, which go to the
/// lexicographically smallest assignment.
pub fn brute_force_solve(
    y: &[f64],
    theta: &HyperParams,
    max_outliers: usize,
) -> Result<BruteForce> {
    check_rails(y.len(), theta.n_max_gap, max_outliers)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let tie = 1e-12 * spread.max(f64::MIN_POSITIVE);

    let mut best: Option<BruteForce> = None;
    for_each_assignment(y.len(), theta.n_max_gap, max_outliers, |slots| {
        let Some((t, b, obj)) = fit_assignment(y, slots) else {
            return;
        };
        if t < theta.t_low || t > theta.t_high {
            return;
        }
        if best.as_ref().is_none_or(|cur| obj < cur.objective - tie) {
            best = Some(BruteForce {
                assignment: Assignment::new(slots.to_vec()),
                t,
                b,
                objective: obj,
            });
        }
    })?;
    best.ok_or(Error::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(n_max: u64, t_low: f64, t_high: f64) -> HyperParams {
        HyperParams::new(1e-6, 0.01, n_max, 0.1, t_low, t_high).unwrap()
    }

    #[test]
    fn dense_only() {
        let all = enumerate_assignments(3, 1, 0).unwrap();
        assert_eq!(all, vec![Assignment::from_ints(&[0, 1, 2])]);
    }

    #[test]
    fn gap_two() {
        let all: Vec<Vec<i64>> = enumerate_assignments(3, 2, 0)
            .unwrap()
            .iter()
            .map(|a| a.to_ints())
            .collect();
        assert_eq!(
            all,
            vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![0, 2, 4]]
        );
    }

    #[test]
    fn one_outlier_pair() {
        let all: Vec<Vec<i64>> = enumerate_assignments(2, 3, 1)
            .unwrap()
            .iter()
            .map(|a| a.to_ints())
            .collect();
        assert_eq!(
            all,
            vec![vec![-1, 0], vec![0, -1], vec![0, 1], vec![0, 2], vec![0, 3]]
        );
    }

    #[test]
    fn counts_match_closed_form() {
        for n in 1..=7 {
            for gap in 1..=4 {
                for o in 0..=2 {
                    let mut count = 0u128;
                    for_each_assignment(n, gap, o, |_| count += 1).unwrap();
                    assert_eq!(count, assignment_count(n, gap, o), "n={n} gap={gap} o={o}");
                }
            }
        }
    }

    #[test]
    fn enumeration_is_lexicographic_and_valid() {
        let all = enumerate_assignments(5, 3, 2).unwrap();
        for w in all.windows(2) {
            let a: Vec<i64> = w[0].slots().iter().map(|s| s.sort_key()).collect();
            let b: Vec<i64> = w[1].slots().iter().map(|s| s.sort_key()).collect();
            assert!(a < b);
        }
        assert!(all.iter().all(|a| crate::domain::validate_assignment(a, 3)));
    }

    #[test]
    fn guard_rails() {
        assert!(matches!(
            enumerate_assignments(11, 2, 0),
            Err(Error::GuardRail(_))
        ));
        assert!(matches!(
            enumerate_assignments(5, 5, 0),
            Err(Error::GuardRail(_))
        ));
        assert!(matches!(
            enumerate_assignments(5, 2, 3),
            Err(Error::GuardRail(_))
        ));
    }

    #[test]
    fn noiseless_three_points() {
        let r = brute_force_solve(&[0.0, 10.0, 30.0], &theta(2, 1.0, 100.0), 0).unwrap();
        assert_eq!(r.assignment.to_ints(), vec![0, 1, 3]);
        assert!(r.objective < 1e-20);
        assert!((r.t - 10.0).abs() < 1e-12);
    }

    #[test]
    fn submultiple_tie_goes_to_smallest_indices() {
        let r = brute_force_solve(&[0.0, 10.0, 30.0], &theta(4, 1.0, 100.0), 0).unwrap();
        assert_eq!(r.assignment.to_ints(), vec![0, 1, 3]);
        // With the bounds excluding 10 only the half period remains.
        let r = brute_force_solve(&[0.0, 10.0, 30.0], &theta(4, 1.0, 8.0), 0).unwrap();
        assert_eq!(r.assignment.to_ints(), vec![0, 2, 6]);
        assert!((r.t - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_space() {
        let r = brute_force_solve(&[0.0, 7.0], &theta(1, 1.0, 100.0), 0).unwrap();
        assert_eq!(r.assignment.to_ints(), vec![0, 1]);
    }

    #[test]
    fn infeasible_bounds() {
        assert_eq!(
            brute_force_solve(&[0.0, 10.0, 30.0], &theta(2, 50.0, 100.0), 0),
            Err(Error::Infeasible)
        );
    }
}
