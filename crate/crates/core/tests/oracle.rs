use pulse_period::domain::{HyperParams, Slot};
use pulse_period::oracle::{brute_force_solve, fit_assignment};
use pulse_period::pipeline::{estimate_period, EstimatorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Small train with one detection placed halfway between two pulse slots.
fn instance(seed: u64) -> (Vec<f64>, f64, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(20.0..100.0);
    let n_in = rng.random_range(4..=6);
    let mut xs = vec![0u64];
    for _ in 1..n_in {
        xs.push(xs.last().unwrap() + rng.random_range(1..=3));
    }
    let mut points: Vec<(f64, i64)> = xs
        .iter()
        .map(|&x| {
            (
                x as f64 * t + t / 100.0 * rng.sample::<f64, _>(StandardNormal),
                x as i64,
            )
        })
        .collect();
    let after = rng.random_range(2..n_in);
    let slot = xs[after - 1] as f64 + 0.5;
    points.push((slot * t, -1));
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let y: Vec<f64> = points.iter().map(|p| p.0 - points[0].0).collect();
    (y, t, points.iter().map(|p| p.1).collect())
}

#[test]
fn search_matches_brute_force_with_one_outlier() {
    for seed in 0..60 {
        let (y, t, truth) = instance(seed);
        let theta = HyperParams::new(1e-6, t / 100.0, 3, 0.2, 0.75 * t, 1.25 * t).unwrap();
        let bf = brute_force_solve(&y, &theta, 1).unwrap();
        assert_eq!(bf.assignment.to_ints(), truth, "seed {seed}");

        let est = estimate_period(&y, &theta, &EstimatorConfig::default()).unwrap();
        assert!(est.is_solved(), "seed {seed}");
        assert_eq!(est.assignment, bf.assignment, "seed {seed}");
        let (_, _, obj) = fit_assignment(&y, est.assignment.slots()).unwrap();
        assert!(
            (obj - bf.objective).abs() <= 1e-6 * bf.objective.max(1e-12),
            "seed {seed}"
        );
        assert!((est.t_hat - bf.t).abs() <= 1e-9 * bf.t);
    }
}

#[test]
fn outlier_free_search_matches_brute_force() {
    let y = [0.0, 30.0, 90.0, 150.0, 180.0];
    let theta = HyperParams::new(1e-6, 0.01, 3, 0.1, 20.0, 40.0).unwrap();
    let bf = brute_force_solve(&y, &theta, 0).unwrap();
    let est = estimate_period(&y, &theta, &EstimatorConfig::default()).unwrap();
    assert_eq!(est.assignment, bf.assignment);
    assert_eq!(bf.assignment.slots()[2], Slot::Index(3));
    assert!(bf.objective < 1e-12);
}
