//! Seeded k-means++ with Lloyd iterations, and silhouette-based k choice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("k = {k} is out of range for {n} point(s)")]
    KOutOfRange { k: usize, n: usize },
    #[error("max_iterations must be positive")]
    NoIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringProblem {
    pub points: Vec<Vec<f64>>,
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Independent seeded initializations; the run with the lowest
    /// objective wins (earliest on ties).
    pub restarts: usize,
}

impl ClusteringProblem {
    pub fn new(points: Vec<Vec<f64>>, k: usize, seed: u64) -> Self {
        ClusteringProblem {
            points,
            k,
            seed,
            max_iterations: 100,
            restarts: 8,
        }
    }

    fn validate(&self) -> Result<usize, ClusterError> {
        let first = self.points.first().ok_or(ClusterError::Empty)?;
        let dim = first.len();
        if let Some((index, p)) = self.points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(ClusterError::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if self.k == 0 || self.k > self.points.len() {
            return Err(ClusterError::KOutOfRange {
                k: self.k,
                n: self.points.len(),
            });
        }
        if self.max_iterations == 0 {
            return Err(ClusterError::NoIterations);
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances at termination.
    pub objective: f64,
    /// Objective after initialization and after every Lloyd iteration of
    /// the winning run.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    /// Member indices per cluster, in point order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (i, d) = nearest(p, centroids);
            objective += d;
            i
        })
        .collect();
    (assignments, objective)
}

/// Objective of a given assignment against given centroids.
pub fn objective(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

/// k-means++ seeding: first centre uniform, then D²-weighted. When every
/// remaining point coincides with a centre, the lowest unused index is taken.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in dist.iter().enumerate() {
                if *d > 0.0 {
                    pick = Some(i);
                    if target < *d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn update(points: &[Vec<f64>], assignments: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((sum, count), prev)| {
            if count == 0 {
                prev.clone()
            } else {
                sum.into_iter().map(|s| s / count as f64).collect()
            }
        })
        .collect()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iterations: usize) -> KMeansResult {
    let (mut assignments, initial) = assign(points, &centroids);
    let mut history = vec![initial];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        centroids = update(points, &assignments, &centroids);
        let (next, obj) = assign(points, &centroids);
        history.push(obj);
        let done = next == assignments;
        assignments = next;
        if done {
            break;
        }
    }
    KMeansResult {
        objective: *history.last().expect("history is never empty"),
        assignments,
        centroids,
        history,
        iterations,
    }
}

/// Cluster `problem.points` into `problem.k` groups. Deterministic for a
/// fixed seed.
pub fn kmeans(problem: &ClusteringProblem) -> Result<KMeansResult, ClusterError> {
    problem.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..problem.restarts.max(1) {
        let init = seed_centroids(&problem.points, problem.k, &mut rng);
        let run = lloyd(&problem.points, init, problem.max_iterations);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette coefficient of a clustering. Points in singleton
/// clusters score 0. Returns 0 when there is only one cluster.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if k < 2 || n < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += squared_distance(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

/// Pick k by the best mean silhouette over `2..=k_max` (smallest k on
/// ties). One cluster is chosen outright when every point lies within
/// `radius` (squared distance) of the mean.
pub fn choose_k(
    points: &[Vec<f64>],
    k_max: usize,
    seed: u64,
    radius: f64,
) -> Result<(usize, KMeansResult), ClusterError> {
    let single = kmeans(&ClusteringProblem::new(points.to_vec(), 1, seed))?;
    let n = points.len();
    let compact = points
        .iter()
        .all(|p| squared_distance(p, &single.centroids[0]) <= radius);
    if compact || n == 1 {
        return Ok((1, single));
    }
    let upper = k_max.min(n).max(2);
    let mut best: Option<(f64, usize, KMeansResult)> = None;
    for k in 2..=upper {
        let run = kmeans(&ClusteringProblem::new(points.to_vec(), k, seed))?;
        let score = silhouette(points, &run.assignments, k);
        if best.as_ref().is_none_or(|(s, ..)| score > *s) {
            best = Some((score, k, run));
        }
    }
    let (_, k, run) = best.expect("range is non-empty");
    Ok((k, run))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn square_example() {
        let p = ClusteringProblem::new(pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]), 2, 7);
        let r = kmeans(&p).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_k() {
        let points = pts(&[(0.0, 0.0), (1.0, 3.0), (4.0, 2.0)]);
        let r = kmeans(&ClusteringProblem::new(points.clone(), 3, 1)).unwrap();
        assert_eq!(r.objective, 0.0);
        let r = kmeans(&ClusteringProblem::new(points.clone(), 1, 1)).unwrap();
        let mean = [5.0 / 3.0, 5.0 / 3.0];
        assert!((r.centroids[0][0] - mean[0]).abs() < 1e-12);
        let var: f64 = points.iter().map(|p| squared_distance(p, &mean)).sum();
        assert!((r.objective - var).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert_eq!(kmeans(&ClusteringProblem::new(vec![], 1, 0)), Err(ClusterError::Empty));
        assert!(matches!(
            kmeans(&ClusteringProblem::new(vec![vec![0.0], vec![0.0, 1.0]], 1, 0)),
            Err(ClusterError::DimensionMismatch { index: 1, .. })
        ));
        assert!(matches!(
            kmeans(&ClusteringProblem::new(vec![vec![0.0]], 2, 0)),
            Err(ClusterError::KOutOfRange { k: 2, n: 1 })
        ));
        assert!(matches!(
            kmeans(&ClusteringProblem::new(vec![vec![0.0]], 0, 0)),
            Err(ClusterError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn duplicate_points_seed_without_panic() {
        let r = kmeans(&ClusteringProblem::new(vec![vec![1.0, 1.0]; 4], 3, 3)).unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn silhouette_prefers_planted_k() {
        let points = pts(&[
            (0.0, 0.0), (0.1, 0.0), (0.0, 0.1),
            (5.0, 5.0), (5.1, 5.0), (5.0, 5.1),
            (9.0, 0.0), (9.1, 0.0), (9.0, 0.1),
        ]);
        let (k, _) = choose_k(&points, 6, 11, 0.01).unwrap();
        assert_eq!(k, 3);
        let (k, _) = choose_k(&pts(&[(0.0, 0.0), (0.01, 0.0)]), 6, 11, 0.01).unwrap();
        assert_eq!(k, 1);
    }
}
