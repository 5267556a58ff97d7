//! K-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Matrix;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { n: usize, k: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("points contain non-finite values")]
    NonFinite,
}

/// Result of one K-means run.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id per point, in `[0, k)`.
    pub labels: Vec<usize>,
    /// `k × d`.
    pub centroids: Matrix,
    /// `Σ_i ‖x_i − centroid(label_i)‖²`.
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lowest-index nearest centroid and its squared distance.
fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// `Σ ‖x_i − centroids[labels_i]‖²`.
pub fn inertia(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)))
        .sum()
}

fn plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Lloyd iterations from k-means++ seeds until assignments are stable or
/// [`MAX_ITERATIONS`] is reached. An emptied cluster is re-seeded at the
/// point farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    let (n, d) = points.shape();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    if !points.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dist) = nearest(points.row(i), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = dist;
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // Re-seed empty clusters, each claiming its own farthest point.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n ≥ k leaves a shared cluster");
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
            centroids.row_mut(c).copy_from_slice(points.row(far));
            changed = true;
        }
        history.push(dists.iter().sum());
        if !changed {
            converged = true;
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        for (i, &l) in labels.iter().enumerate() {
            for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            let inv = 1.0 / count as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    let inertia = inertia(points, &centroids, &labels);
    Ok(ClusterAssignment {
        labels,
        centroids,
        inertia,
        iterations,
        converged,
        inertia_history: history,
    })
}

/// Best-inertia run over `seeds`; ties keep the earliest seed.
pub fn kmeans_best(
    points: &Matrix,
    k: usize,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<ClusterAssignment, ClusterError> {
    let mut best: Option<ClusterAssignment> = None;
    for seed in seeds {
        let run = kmeans(points, k, seed)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.ok_or(ClusterError::ZeroClusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_pairs() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 10.0],
            vec![10.0, 11.0],
        ]);
        let a = kmeans(&x, 2, 0).unwrap();
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        assert!((a.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_mean() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]]);
        let a = kmeans(&x, 1, 4).unwrap();
        assert_eq!(a.centroids.row(0), &[3.0, 3.0]);
    }

    #[test]
    fn beats_random_assignments_and_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Matrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let a = kmeans(&x, 3, 0).unwrap();
        assert!(a.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!((a.inertia - *a.inertia_history.last().unwrap()).abs() < 1e-9);
        for _ in 0..100 {
            let labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
            let mut cent = Matrix::zeros(3, 2);
            let mut counts = [0.0f64; 3];
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1.0;
                for c in 0..2 {
                    cent.set(l, c, cent.get(l, c) + x.get(i, c));
                }
            }
            for (l, count) in counts.iter().enumerate() {
                for c in 0..2 {
                    cent.set(l, c, cent.get(l, c) / count.max(1.0));
                }
            }
            assert!(a.inertia <= inertia(&x, &cent, &labels));
        }
    }

    #[test]
    fn duplicate_points_fill_every_cluster() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![2.0]]);
        let a = kmeans(&x, 3, 1).unwrap();
        let mut seen = a.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(kmeans(&Matrix::zeros(2, 1), 3, 0).is_err());
        assert!(kmeans(&Matrix::zeros(2, 1), 0, 0).is_err());
    }
}
