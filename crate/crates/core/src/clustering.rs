//! Pose clusters, the exemplar bank, and the cluster adjacency that defines
//! which pose transitions a path may take.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{hip_height, Frame, Pose, POSE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterLabel {
    #[serde(rename = "sitting")]
    SittingLike,
    #[serde(rename = "standing")]
    StandingLike,
}

impl ClusterLabel {
    pub fn name(self) -> &'static str {
        match self {
            ClusterLabel::SittingLike => "sitting",
            ClusterLabel::StandingLike => "standing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<Vec<f64>>,
    labels: Vec<ClusterLabel>,
}

impl ClusterModel {
    pub fn new(centroids: Vec<Vec<f64>>, labels: Vec<ClusterLabel>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyModel);
        }
        let dim = centroids[0].len();
        for c in &centroids {
            if c.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite centroid".into()));
            }
        }
        if !labels.is_empty() && labels.len() != centroids.len() {
            return Err(Error::LengthMismatch {
                what: "cluster labels",
                expected: centroids.len(),
                actual: labels.len(),
            });
        }
        Ok(Self { centroids, labels })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Per-cluster sit/stand labels, once assigned.
    pub fn labels(&self) -> Option<&[ClusterLabel]> {
        (!self.labels.is_empty()).then_some(self.labels.as_slice())
    }

    pub fn with_labels(mut self, labels: Vec<ClusterLabel>) -> Result<Self> {
        if labels.len() != self.k() {
            return Err(Error::LengthMismatch {
                what: "cluster labels",
                expected: self.k(),
                actual: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Nearest centroid of a raw vector; ties go to the lowest id.
    pub fn nearest(&self, v: &[f64]) -> usize {
        nearest_centroid(&self.centroids, v).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, v);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

/// k-means over wearer-local poses.
pub fn kmeans(poses: &[Pose], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    for p in poses {
        if p.frame() != Frame::WearerLocal {
            return Err(Error::FrameMismatch {
                expected: Frame::WearerLocal,
                actual: p.frame(),
            });
        }
    }
    let data: Vec<Vec<f64>> = poses.iter().map(Pose::to_vec).collect();
    kmeans_vectors(&data, k, seed, max_iters)
}

/// Lloyd's algorithm with k-means++ seeding on arbitrary equal-length vectors.
pub fn kmeans_vectors(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if data.len() < k {
        return Err(Error::TooFewPoses { n: data.len(), k });
    }
    let dim = data[0].len();
    if let Some(bad) = data.iter().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(data, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters.max(1) {
        let step: Vec<(usize, f64)> = data
            .par_iter()
            .map(|v| nearest_centroid(&centroids, v))
            .collect();
        let next: Vec<usize> = step.iter().map(|s| s.0).collect();
        let objective: f64 = step.iter().map(|s| s.1).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                objective <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means objective increased: {prev} -> {objective}"
            );
        }
        history.push(objective);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
        let distances: Vec<f64> = step.iter().map(|s| s.1).collect();
        update_centroids(data, &mut assignments, &distances, &mut centroids);
    }

    Ok(KMeansResult {
        model: ClusterModel::new(centroids, Vec::new())?,
        assignments,
        objective_history: history,
        converged,
    })
}

fn plus_plus_seeds(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let first = rng.random_range(0..n);
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut centroids = vec![data[first].clone()];
    let mut d2: Vec<f64> = data.iter().map(|v| sq_dist(v, &data[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can leave the target just past the last weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every remaining point duplicates a centroid.
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[pick] = true;
        centroids.push(data[pick].clone());
        for (i, v) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &data[pick]));
        }
    }
    centroids
}

/// Recomputes means; an empty cluster takes over the point farthest from its
/// current centroid.
fn update_centroids(
    data: &[Vec<f64>],
    assignments: &mut [usize],
    distances: &[f64],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &c) in data.iter().zip(assignments.iter()) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(v) {
            *s += x;
        }
    }
    let mut taken = vec![false; data.len()];
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids[c] = sums[c].iter().map(|s| s / n).collect();
            continue;
        }
        let far = (0..data.len())
            .filter(|&i| !taken[i] && counts[assignments[i]] > 1)
            .max_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(b.cmp(&a)));
        if let Some(i) = far {
            taken[i] = true;
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            counts[c] = 1;
            centroids[c] = data[i].clone();
        }
    }
    // Donor clusters lost a point; refresh their means.
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &c) in data.iter().zip(assignments.iter()) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(v) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids[c] = sums[c].iter().map(|s| s / n).collect();
        }
    }
}

/// Nearest cluster of a wearer-local pose; ties go to the lowest id.
pub fn assign_cluster(p: &Pose, m: &ClusterModel) -> Result<usize> {
    if p.frame() != Frame::WearerLocal {
        return Err(Error::FrameMismatch {
            expected: Frame::WearerLocal,
            actual: p.frame(),
        });
    }
    if m.dim() != POSE_DIM {
        return Err(Error::DimMismatch {
            expected: POSE_DIM,
            actual: m.dim(),
        });
    }
    Ok(m.nearest(&p.to_vec()))
}

/// Symmetric cluster adjacency from temporally adjacent bank poses.
///
/// `sequence_breaks` lists bank indices that start a new training sequence;
/// the pair `(b - 1, b)` is not adjacent for any break `b`.
pub fn build_neighbor_graph(
    cluster_of: &[usize],
    sequence_breaks: &[usize],
    k: usize,
) -> Vec<Vec<usize>> {
    let mut adj = vec![vec![false; k]; k];
    for (c, row) in adj.iter_mut().enumerate() {
        row[c] = true;
    }
    for i in 1..cluster_of.len() {
        if sequence_breaks.binary_search(&i).is_ok() {
            continue;
        }
        let (a, b) = (cluster_of[i - 1], cluster_of[i]);
        adj[a][b] = true;
        adj[b][a] = true;
    }
    adj.iter()
        .map(|row| (0..k).filter(|&c| row[c]).collect())
        .collect()
}

/// Training poses in temporal order with their cluster structure.
#[derive(Debug, Clone)]
pub struct ExemplarBank {
    poses: Vec<Pose>,
    cluster_of: Vec<usize>,
    sequence_breaks: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    adjacency: Vec<bool>,
}

impl ExemplarBank {
    /// Concatenates training sequences and assigns every pose to a cluster.
    pub fn build(sequences: &[Vec<Pose>], model: &ClusterModel) -> Result<Self> {
        let mut poses = Vec::new();
        let mut breaks = Vec::new();
        for seq in sequences.iter().filter(|s| !s.is_empty()) {
            if !poses.is_empty() {
                breaks.push(poses.len());
            }
            poses.extend(seq.iter().cloned());
        }
        let cluster_of = poses
            .par_iter()
            .map(|p| assign_cluster(p, model))
            .collect::<Result<Vec<_>>>()?;
        let neighbors = build_neighbor_graph(&cluster_of, &breaks, model.k());
        Self::from_parts(poses, cluster_of, breaks, neighbors)
    }

    pub fn from_parts(
        poses: Vec<Pose>,
        cluster_of: Vec<usize>,
        sequence_breaks: Vec<usize>,
        neighbors: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if poses.len() != cluster_of.len() {
            return Err(Error::LengthMismatch {
                what: "bank cluster assignments",
                expected: poses.len(),
                actual: cluster_of.len(),
            });
        }
        let k = neighbors.len();
        let mut adjacency = vec![false; k * k];
        for (a, ns) in neighbors.iter().enumerate() {
            for &b in ns {
                if b >= k {
                    return Err(Error::InvalidParameter(format!(
                        "neighbor {b} of cluster {a} out of range"
                    )));
                }
                adjacency[a * k + b] = true;
            }
        }
        let mut neighbors = neighbors;
        for ns in neighbors.iter_mut() {
            ns.sort_unstable();
            ns.dedup();
        }
        let bank = Self {
            poses,
            cluster_of,
            sequence_breaks,
            neighbors,
            adjacency,
        };
        bank.verify()?;
        Ok(bank)
    }

    /// Re-checks every structural invariant of the bank.
    pub fn verify(&self) -> Result<()> {
        let k = self.neighbors.len();
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if let Some(p) = self.poses.iter().find(|p| p.frame() != Frame::WearerLocal) {
            return Err(Error::FrameMismatch {
                expected: Frame::WearerLocal,
                actual: p.frame(),
            });
        }
        if let Some(&c) = self.cluster_of.iter().find(|&&c| c >= k) {
            return bad(format!("cluster id {c} out of range for k = {k}"));
        }
        if self.sequence_breaks.windows(2).any(|w| w[0] >= w[1])
            || self
                .sequence_breaks
                .iter()
                .any(|&b| b == 0 || b >= self.poses.len())
        {
            return bad("sequence breaks must be sorted interior indices".into());
        }
        for a in 0..k {
            if !self.are_neighbors(a, a) {
                return bad(format!("cluster {a} is not its own neighbor"));
            }
            for &b in &self.neighbors[a] {
                if !self.are_neighbors(b, a) {
                    return bad(format!("neighbor relation not symmetric for {a}, {b}"));
                }
            }
        }
        for i in 1..self.poses.len() {
            if self.sequence_breaks.binary_search(&i).is_ok() {
                continue;
            }
            if !self.are_neighbors(self.cluster_of[i - 1], self.cluster_of[i]) {
                return bad(format!("adjacent poses {} and {i} in non-neighbor clusters", i - 1));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.poses[i]
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i]
    }

    pub fn cluster_assignments(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn sequence_breaks(&self) -> &[usize] {
        &self.sequence_breaks
    }

    pub fn neighbors(&self, cluster: usize) -> &[usize] {
        &self.neighbors[cluster]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        let k = self.k();
        a < k && b < k && self.adjacency[a * k + b]
    }

    /// True if a sequence starts strictly after `min(a, b)` and at or before `max(a, b)`.
    pub fn crosses_break(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let first = self.sequence_breaks.partition_point(|&s| s <= lo);
        first < self.sequence_breaks.len() && self.sequence_breaks[first] <= hi
    }

    /// Half-open index ranges of the training sequences.
    pub fn sequence_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut starts = vec![0];
        starts.extend(&self.sequence_breaks);
        let mut ends: Vec<usize> = self.sequence_breaks.clone();
        ends.push(self.poses.len());
        starts.into_iter().zip(ends).map(|(s, e)| s..e).collect()
    }

    /// Bank indices grouped by cluster.
    pub fn members_by_cluster(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.cluster_of.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Threshold between the two modes of a set of hip heights, found by 1-D
/// 2-means started from the extremes.
pub fn sit_threshold(heights: &[f64]) -> Result<f64> {
    if heights.is_empty() {
        return Err(Error::EmptyModel);
    }
    let lo = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok(lo);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for &h in heights {
            if h <= mid {
                sa += h;
                na += 1;
            } else {
                sb += h;
                nb += 1;
            }
        }
        let (next_a, next_b) = (sa / na as f64, sb / nb.max(1) as f64);
        if nb == 0 || (next_a == a && next_b == b) {
            break;
        }
        a = next_a;
        b = next_b;
    }
    Ok(0.5 * (a + b))
}

/// Labels a centroid sitting-like iff its hip height is below `theta`.
pub fn label_clusters(m: &ClusterModel, theta: f64) -> Vec<ClusterLabel> {
    m.centroids()
        .iter()
        .map(|c| {
            if hip_height(c) < theta {
                ClusterLabel::SittingLike
            } else {
                ClusterLabel::StandingLike
            }
        })
        .collect()
}
