//! Seeded k-means over strategy embeddings.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::EntryId;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("no embeddings to cluster")]
    NoEmbeddings,
    #[error("embedding for entry {id} has dimension {got}, expected {expected}")]
    DimensionMismatch { id: EntryId, expected: usize, got: usize },
}

/// Partition of archive entries into strategy clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub assignments: BTreeMap<EntryId, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub effective_c: usize,
    pub seed: u64,
}

impl ClusterState {
    pub fn cluster_of(&self, id: EntryId) -> Option<usize> {
        self.assignments.get(&id).copied()
    }

    /// Member ids of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<EntryId> {
        self.assignments
            .iter()
            .filter(|(_, c)| **c == cluster)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.effective_c];
        for c in self.assignments.values() {
            sizes[*c] += 1;
        }
        sizes
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids)).collect()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&min_d) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a chosen centroid
            Err(_) => {
                let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
fn repair_empty(points: &[Vec<f64>], assign: &mut [usize], centroids: &mut [Vec<f64>]) {
    for empty in 0..centroids.len() {
        let mut sizes = vec![0usize; centroids.len()];
        for c in assign.iter() {
            sizes[*c] += 1;
        }
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| sizes[assign[i]] >= 2)
            .map(|i| (i, sq_dist(&points[i], &centroids[assign[i]])))
            .fold(None::<(usize, f64)>, |acc, (i, d)| match acc {
                Some((_, best)) if d <= best => acc,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("point count >= cluster count");
        assign[donor] = empty;
        centroids[empty] = points[donor].clone();
    }
}

fn means(points: &[Vec<f64>], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, c) in points.iter().zip(assign) {
        counts[*c] += 1;
        for (s, x) in sums[*c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, n) in sums.iter_mut().zip(counts) {
        for x in s.iter_mut() {
            *x /= n.max(1) as f64;
        }
    }
    sums
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Runs to an assignment fixpoint or [`MAX_LLOYD_ITERATIONS`]. Uses
/// `min(c, n)` clusters and guarantees none is empty on return. Inputs are
/// ordered by id, so results depend only on the id set, vectors and seed.
pub fn cluster(
    embeddings: &[(EntryId, Vec<f64>)],
    c: usize,
    seed: u64,
) -> Result<ClusterState, ClusterError> {
    if c == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    let Some((_, first)) = embeddings.first() else {
        return Err(ClusterError::NoEmbeddings);
    };
    let dim = first.len();
    if let Some((id, v)) = embeddings.iter().find(|(_, v)| v.len() != dim) {
        return Err(ClusterError::DimensionMismatch { id: *id, expected: dim, got: v.len() });
    }

    let mut ordered: Vec<&(EntryId, Vec<f64>)> = embeddings.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    let ids: Vec<EntryId> = ordered.iter().map(|(id, _)| *id).collect();
    let points: Vec<Vec<f64>> = ordered.iter().map(|(_, v)| normalized(v)).collect();
    let k = c.min(points.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);
    let mut assign = assign_all(&points, &centroids);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        repair_empty(&points, &mut assign, &mut centroids);
        centroids = means(&points, &assign, k, dim);
        let next = assign_all(&points, &centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    repair_empty(&points, &mut assign, &mut centroids);
    centroids = means(&points, &assign, k, dim);

    Ok(ClusterState {
        assignments: ids.into_iter().zip(assign).collect(),
        centroids,
        effective_c: k,
        seed,
    })
}
