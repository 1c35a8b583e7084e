//! k-means against exhaustive search over all partitions.

use akg_core::curation::{kmeans, ClusteringProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum within-cluster sum of squares over every assignment of `points`
/// to exactly `k` non-empty clusters.
fn brute_force_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let j: f64 = points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| {
                    p.iter()
                        .zip(&sums[l])
                        .map(|(v, s)| (v - s / counts[l] as f64).powi(2))
                        .sum::<f64>()
                })
                .sum();
            best = best.min(j);
        }
        // Next labelling in base k.
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// `k` planted groups: centres 10 apart on a line, members within 0.5 of
/// their centre, so separation exceeds four times the spread.
fn separated(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let c = (i % k) as f64 * 10.0;
            vec![c + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]
        })
        .collect()
}

#[test]
fn hand_instance() {
    let points = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let run = kmeans(&ClusteringProblem::new(points.clone(), 2, 0)).unwrap();
    assert!((run.objective - 1.0).abs() < 1e-12);
    assert!((brute_force_optimum(&points, 2) - 1.0).abs() < 1e-12);
    let mut centroids = run.centroids.clone();
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(centroids, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
}

#[test]
fn matches_brute_force_on_separated_instances() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + seed as usize % 3;
        let n = rng.random_range(k.max(2)..=8);
        let points = separated(&mut rng, n, k);
        let run = kmeans(&ClusteringProblem::new(points.clone(), k, seed)).unwrap();
        let optimum = brute_force_optimum(&points, k);
        assert!(
            (run.objective - optimum).abs() <= 1e-9,
            "seed {seed}: n={n} k={k} J={} optimum={optimum}",
            run.objective
        );
        checked += 1;
    }
    assert_eq!(checked, 60);
}

#[test]
fn objective_never_increases_across_iterations() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let n = rng.random_range(3..40);
        let dim = rng.random_range(1..5);
        let k = rng.random_range(1..=n.min(6));
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let run = kmeans(&ClusteringProblem::new(points, k, seed)).unwrap();
        for w in run.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "seed {seed}: {:?}", run.history);
        }
        assert_eq!(run.objective, *run.history.last().unwrap());
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let points: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
    let bits = |seed| {
        let run = kmeans(&ClusteringProblem::new(points.clone(), 4, seed)).unwrap();
        let centroids: Vec<u64> = run.centroids.iter().flatten().map(|v| v.to_bits()).collect();
        (run.assignments, centroids, run.objective.to_bits())
    };
    assert_eq!(bits(5), bits(5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn never_beats_the_optimum(seed in any::<u64>(), n in 2usize..=7, k in 1usize..=3) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)]).collect();
        let run = kmeans(&ClusteringProblem::new(points.clone(), k, seed)).unwrap();
        prop_assert!(run.objective >= brute_force_optimum(&points, k) - 1e-9);
        prop_assert_eq!(run.centroids.len(), k);
    }
}
