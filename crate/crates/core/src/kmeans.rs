//! Seeded k-means over zone embedding vectors, for the latent-representation
//! cluster export.

use impactcast_nn::init;
use impactcast_nn::Tensor;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KmeansError {
    #[error("k = {k} exceeds the number of points {n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

pub const MAX_ITERS: usize = 100;
pub const SHIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Tensor,
    pub inertia: f64,
    pub iterations: usize,
    /// inertia after each assignment step, for monotonicity checks
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Standard Lloyd iterations from a k-means++ seeding, deterministic under
/// the seed. Stops after `MAX_ITERS` or when every centroid moves less than
/// `SHIFT_TOL`.
pub fn cluster_embeddings(points: &Tensor, k: usize, seed: u64) -> Result<KmeansResult, KmeansError> {
    let n = points.rows();
    let d = points.cols();
    if k == 0 {
        return Err(KmeansError::ZeroK);
    }
    if k > n {
        return Err(KmeansError::TooFewPoints { k, n });
    }
    let mut rng = init::stream(seed, "kmeans");

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all residual distances zero: fall back to an unused point
            (0..n)
                .find(|&i| !centroids.iter().any(|c| c == points.row(i)))
                .unwrap_or(0)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centroids.push(points.row(next).to_vec());
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points.row(i), centroids.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..MAX_ITERS {
        iterations += 1;
        // assignment step
        let mut inertia = 0.0;
        for i in 0..n {
            let (best, dist) = centroids
                .iter()
                .enumerate()
                .map(|(c, cent)| (c, sq_dist(points.row(i), cent)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assignment[i] = best;
            inertia += dist;
        }
        inertia_trace.push(inertia);

        // update step
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, &v) in sums[assignment[i]].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point farthest from its
                // centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points.row(a), &centroids[assignment[a]])
                            .partial_cmp(&sq_dist(points.row(b), &centroids[assignment[b]]))
                            .unwrap()
                    })
                    .unwrap();
                shift += sq_dist(&centroids[c], points.row(far)).sqrt();
                centroids[c] = points.row(far).to_vec();
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift += sq_dist(&centroids[c], &new).sqrt();
            centroids[c] = new;
        }
        if shift < SHIFT_TOL {
            break;
        }
    }

    // final assignment against the settled centroids
    let mut inertia = 0.0;
    for i in 0..n {
        let (best, dist) = centroids
            .iter()
            .enumerate()
            .map(|(c, cent)| (c, sq_dist(points.row(i), cent)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assignment[i] = best;
        inertia += dist;
    }
    inertia_trace.push(inertia);

    let flat: Vec<f64> = centroids.into_iter().flatten().collect();
    Ok(KmeansResult {
        assignment,
        centroids: Tensor::from_vec(&[k, d], flat).expect("centroid dims"),
        inertia,
        iterations,
        inertia_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_points() -> Tensor {
        let mut rng = init::stream(5, "kmeans/test-blobs");
        let mut data = Vec::new();
        for i in 0..40 {
            let center = if i < 20 { [0.0, 0.0] } else { [10.0, 10.0] };
            data.push(center[0] + 0.3 * init::standard_normal(&mut rng));
            data.push(center[1] + 0.3 * init::standard_normal(&mut rng));
        }
        Tensor::from_vec(&[40, 2], data).unwrap()
    }

    #[test]
    fn separated_blobs_split_perfectly() {
        let points = blob_points();
        let result = cluster_embeddings(&points, 2, 11).unwrap();
        let first = result.assignment[0];
        assert!(result.assignment[..20].iter().all(|&a| a == first));
        assert!(result.assignment[20..].iter().all(|&a| a != first));
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points = Tensor::from_vec(&[4, 2], vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let result = cluster_embeddings(&points, 4, 3).unwrap();
        assert!(result.inertia < 1e-18);
        let mut sorted = result.assignment.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn same_seed_same_assignment() {
        let points = blob_points();
        let a = cluster_embeddings(&points, 3, 7).unwrap();
        let b = cluster_embeddings(&points, 3, 7).unwrap();
        assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn inertia_is_non_increasing() {
        let points = blob_points();
        let result = cluster_embeddings(&points, 4, 13).unwrap();
        for pair in result.inertia_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{:?}", result.inertia_trace);
        }
    }

    #[test]
    fn k_larger_than_points_errors() {
        let points = Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            cluster_embeddings(&points, 3, 1),
            Err(KmeansError::TooFewPoints { .. })
        ));
    }
}
