//! Deterministic K-means over caption embeddings or visual features, plus
//! K-nearest-center queries.
//!
//! Initialization is k-means++ with a seeded RNG and Lloyd iterations run
//! until the total center shift drops below `tol` or `max_iters` is hit, so
//! identical inputs always give an identical model. The requested cluster
//! count is clamped to the number of distinct points and empty clusters are
//! re-seeded to the point farthest from its assigned center, so the returned
//! model never has an empty cluster.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// A fitted clustering: centers, per-point assignments, and the summed
/// squared distance (inertia).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center index for a point, ties to the lowest index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.iter().any(|q| *q == p) {
            seen.push(p);
        }
    }
    seen.len()
}

/// Seeded k-means++ initialization.
fn init_centers(points: &[Vec<f64>], c: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(c);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < c {
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let weights = WeightedIndex::new(&dists).expect("positive total weight");
            weights.sample(rng)
        } else {
            // All remaining points coincide with a center; clamping should
            // have prevented this, but fall back to the first free point.
            dists.iter().position(|&d| d > 0.0).unwrap_or(0)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centers.last().expect("just pushed"));
            if d < dists[i] {
                dists[i] = d;
            }
        }
    }
    centers
}

/// Fit K-means. `c` is clamped to the number of distinct points; errors on
/// empty input or any non-finite coordinate.
pub fn kmeans_fit(
    points: &[Vec<f64>],
    c: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(CoreError::data("kmeans: no points"));
    }
    if c == 0 {
        return Err(CoreError::data("kmeans: cluster count must be >= 1"));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(CoreError::data(format!(
                "kmeans: point dimension {} != {dim}",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::data("kmeans: non-finite coordinate"));
        }
    }

    let c = c.min(count_distinct(points));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centers = init_centers(points, c, &mut rng);
    let mut assignments = vec![0usize; points.len()];

    for _ in 0..max_iters {
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p, &centers).0;
        }

        let mut sums = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, x) in sums[assignments[i]].iter_mut().zip(p) {
                *s += x;
            }
        }

        // Re-seed any emptied cluster to the point farthest from its center,
        // stolen from a cluster that keeps at least one member.
        for j in 0..c {
            if counts[j] > 0 {
                continue;
            }
            let far = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[assignments[*i]] > 1)
                .max_by(|(ia, a), (ib, b)| {
                    let da = sq_dist(a, &centers[assignments[*ia]]);
                    let db = sq_dist(b, &centers[assignments[*ib]]);
                    da.partial_cmp(&db)
                        .expect("finite distances")
                        .then(ib.cmp(ia))
                })
                .map(|(i, _)| i);
            let Some(far) = far else {
                continue;
            };
            let old = assignments[far];
            counts[old] -= 1;
            for (s, x) in sums[old].iter_mut().zip(&points[far]) {
                *s -= x;
            }
            counts[j] = 1;
            sums[j] = points[far].clone();
            assignments[far] = j;
        }

        let mut shift = 0.0;
        for j in 0..c {
            if counts[j] == 0 {
                continue;
            }
            let new_center: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift += sq_dist(&new_center, &centers[j]).sqrt();
            centers[j] = new_center;
        }
        if shift < tol {
            break;
        }
    }

    // Final assignment pass against the converged centers.
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, &centers);
        assignments[i] = j;
        inertia += d;
    }

    Ok(ClusterModel {
        centers,
        assignments,
        inertia,
    })
}

/// Indices of the K nearest centers to `point`, ascending by Euclidean
/// distance with ties broken by the lower index.
pub fn nearest_centers(point: &[f64], model: &ClusterModel, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > model.centers.len() {
        return Err(CoreError::data(format!(
            "nearest_centers: K={k} out of range 1..={}",
            model.centers.len()
        )));
    }
    let mut order: Vec<(usize, f64)> = model
        .centers
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sq_dist(point, c)))
        .collect();
    order.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite distances")
            .then(a.0.cmp(&b.0))
    });
    Ok(order.into_iter().take(k).map(|(j, _)| j).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(points: &[Vec<f64>], c: usize, seed: u64) -> ClusterModel {
        kmeans_fit(points, c, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap()
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let m = fit(&pts, 1, 0);
        assert_eq!(m.centers.len(), 1);
        assert!((m.centers[0][0] - 1.0).abs() < 1e-12);
        assert!((m.centers[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn as_many_clusters_as_distinct_points_gives_zero_inertia() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let m = fit(&pts, 3, 1);
        assert_eq!(m.centers.len(), 3);
        assert!(m.inertia.abs() < 1e-12);
    }

    #[test]
    fn cluster_count_clamps_to_distinct_points() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        let m = fit(&pts, 10, 0);
        assert_eq!(m.centers.len(), 2);
        assert!(m.inertia.abs() < 1e-12);
    }

    #[test]
    fn two_well_separated_groups_split_cleanly() {
        // Optimal 2-partition is {0, 0.1} vs {10, 10.1}: centers 0.05 and
        // 10.05, verified against exhaustive enumeration of 2-partitions.
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let m = fit(&pts, 2, 7);
        let mut centers: Vec<f64> = m.centers.iter().map(|c| c[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] - 0.05).abs() < 1e-9);
        assert!((centers[1] - 10.05).abs() < 1e-9);
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
        let expected_inertia = 2.0 * 0.05_f64.powi(2) * 2.0;
        assert!((m.inertia - expected_inertia).abs() < 1e-9);
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        assert!(kmeans_fit(&[vec![f64::NAN]], 1, 0, 10, 1e-6).is_err());
        assert!(kmeans_fit(&[], 1, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn nearest_centers_sorts_by_distance() {
        let model = ClusterModel {
            centers: vec![vec![-1.0], vec![2.0], vec![0.5]],
            assignments: vec![],
            inertia: 0.0,
        };
        // Distances from 0: 1, 2, 0.5 -> indices [2, 0] for K=2.
        assert_eq!(nearest_centers(&[0.0], &model, 2).unwrap(), vec![2, 0]);
        assert_eq!(nearest_centers(&[0.0], &model, 3).unwrap(), vec![2, 0, 1]);
        assert!(nearest_centers(&[0.0], &model, 4).is_err());
        assert!(nearest_centers(&[0.0], &model, 0).is_err());
    }

    #[test]
    fn nearest_centers_ties_go_to_lower_index() {
        let model = ClusterModel {
            centers: vec![vec![1.0], vec![-1.0]],
            assignments: vec![],
            inertia: 0.0,
        };
        assert_eq!(nearest_centers(&[0.0], &model, 2).unwrap(), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn fit_is_deterministic(seed in 0u64..1000, n in 2usize..20) {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![(i as f64 * 0.77).sin() * 4.0, (i as f64 * 1.3).cos()])
                .collect();
            let a = fit(&pts, 3, seed);
            let b = fit(&pts, 3, seed);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn every_point_sits_with_its_nearest_center(seed in 0u64..200) {
            let pts: Vec<Vec<f64>> = (0..15)
                .map(|i| vec![(i as f64 + seed as f64 * 0.1).sin() * 3.0, (i as f64 * 0.31).cos() * 2.0])
                .collect();
            let m = fit(&pts, 4, seed);
            for (i, p) in pts.iter().enumerate() {
                let assigned = sq_dist(p, &m.centers[m.assignments[i]]);
                for c in &m.centers {
                    prop_assert!(assigned <= sq_dist(p, c) + 1e-12);
                }
            }
            // No empty cluster in the returned model.
            for j in 0..m.num_clusters() {
                prop_assert!(!m.members(j).is_empty());
            }
        }
    }
}
