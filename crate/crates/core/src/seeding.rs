//! Seed selection: K-means (k-means++ init, Lloyd iterations, Euclidean
//! distance) over the training embeddings, then one sample per cluster chosen
//! by cosine similarity to the centroid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::kv_enum;
use crate::rng::{stream, stream_rng};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Sum of squared Euclidean distances to the assigned centroid.
    pub inertia: f64,
    /// Inertia after every assignment step, first to last.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusteringResult {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == cluster)
            .map(|(i, _)| i)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, squared_distance(point, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[&[f64]], n: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[chosen[0]]))
        .collect();
    while chosen.len() < n {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a chosen centre
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(squared_distance(p, points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

/// Moves the point farthest from its centroid into each empty cluster as a
/// singleton; donors must keep at least one member.
fn repair_empty(points: &[&[f64]], centroids: &mut [Vec<f64>], assignment: &mut [usize]) {
    let mut sizes = vec![0usize; centroids.len()];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    for empty in 0..centroids.len() {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            if sizes[c] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[c]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("n <= N leaves a cluster with two members");
        sizes[assignment[i]] -= 1;
        assignment[i] = empty;
        sizes[empty] = 1;
        centroids[empty] = points[i].to_vec();
    }
}

fn recompute_centroids(points: &[&[f64]], assignment: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for ((centroid, sum), count) in centroids.iter_mut().zip(sums).zip(counts) {
        if count > 0 {
            *centroid = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

/// Independent k-means++ restarts in [`kmeans`]; the lowest final inertia wins.
pub const DEFAULT_RESTARTS: usize = 10;

/// K-means with k-means++ seeding, best of [`DEFAULT_RESTARTS`] restarts.
pub fn kmeans(points: &[&[f64]], n: usize, rng_seed: u64) -> Result<ClusteringResult> {
    kmeans_restarts(points, n, rng_seed, DEFAULT_RESTARTS)
}

/// Each restart stops at an assignment fixed point or after
/// [`MAX_LLOYD_ITERATIONS`]; ties in final inertia keep the earlier restart.
pub fn kmeans_restarts(
    points: &[&[f64]],
    n: usize,
    rng_seed: u64,
    restarts: usize,
) -> Result<ClusteringResult> {
    if n == 0 {
        return Err(Error::Clustering("number of clusters must be at least 1".into()));
    }
    if restarts == 0 {
        return Err(Error::Clustering("at least one restart is required".into()));
    }
    if n > points.len() {
        return Err(Error::Clustering(format!(
            "{n} clusters requested from {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Clustering("points have differing dimensionality".into()));
    }
    let mut best: Option<ClusteringResult> = None;
    for r in 0..restarts {
        let mut rng = stream_rng(rng_seed, &[stream::SEEDING, 0, r as u64]);
        let run = lloyd(points, plus_plus_init(points, n, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>) -> ClusteringResult {
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        repair_empty(points, &mut centroids, &mut next);
        let inertia = points
            .iter()
            .zip(&next)
            .map(|(p, &c)| squared_distance(p, &centroids[c]))
            .sum();
        history.push(inertia);
        if next == assignment {
            break;
        }
        assignment = next;
        recompute_centroids(points, &assignment, &mut centroids);
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum();
    ClusteringResult {
        centroids,
        assignment,
        inertia,
        inertia_history: history,
        iterations,
    }
}

/// Which samples may represent a centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedCandidates {
    /// Only members of the centroid's own cluster.
    #[default]
    WithinCluster,
    /// Any training sample not already taken by an earlier centroid.
    Global,
}

kv_enum!(SeedCandidates { WithinCluster => "within_cluster", Global => "global" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedChoice {
    /// Position in the clustered point list.
    pub index: usize,
    pub cluster: usize,
    pub similarity: f64,
}

/// One seed per cluster, cosine-nearest to its centroid among the cluster's
/// members; ties go to the lowest index.
pub fn select_seeds(points: &[&[f64]], clustering: &ClusteringResult) -> Result<Vec<SeedChoice>> {
    select_seeds_with(points, clustering, SeedCandidates::WithinCluster)
}

pub fn select_seeds_with(
    points: &[&[f64]],
    clustering: &ClusteringResult,
    candidates: SeedCandidates,
) -> Result<Vec<SeedChoice>> {
    if points.len() != clustering.assignment.len() {
        return Err(Error::Clustering("clustering was computed over different points".into()));
    }
    let usable: Vec<bool> = points.iter().map(|p| norm(p) > 0.0).collect();
    let mut taken = vec![false; points.len()];
    let mut seeds = Vec::with_capacity(clustering.n_clusters());
    for (cluster, centroid) in clustering.centroids.iter().enumerate() {
        if norm(centroid) == 0.0 {
            return Err(Error::Clustering(format!("centroid {cluster} has zero norm")));
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..points.len() {
            let eligible = match candidates {
                SeedCandidates::WithinCluster => clustering.assignment[i] == cluster,
                SeedCandidates::Global => true,
            };
            if !eligible || !usable[i] || taken[i] {
                continue;
            }
            let sim = cosine_similarity(points[i], centroid);
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((i, sim));
            }
        }
        let (index, similarity) = best.ok_or_else(|| {
            Error::Clustering(format!("cluster {cluster} has no usable (non-zero) candidate"))
        })?;
        taken[index] = true;
        seeds.push(SeedChoice { index, cluster, similarity });
    }
    Ok(seeds)
}
