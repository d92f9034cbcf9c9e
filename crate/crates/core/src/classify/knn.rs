//! Exact k-nearest-neighbour search over feature vectors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::ClusterDistribution;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;
/// Below this many points the index is skipped in favour of a linear scan.
const SCAN_LIMIT: usize = 16;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum KdNode {
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

/// Static kd-tree over owned points; splits on the widest dimension at the
/// median.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyModel);
        }
        let dim = points[0].len();
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = tree.points.len();
        tree.build_node(0, n);
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let dim = self.points[0].len();
        let mut widest = (0, 0.0);
        for d in 0..dim {
            let (lo, hi) = self.order[start..end].iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &i| (lo.min(self.points[i][d]), hi.max(self.points[i][d])),
            );
            if hi - lo > widest.1 {
                widest = (d, hi - lo);
            }
        }
        if widest.1 <= 0.0 {
            return id;
        }
        let d = widest.0;
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][d].total_cmp(&points[b][d])
        });
        let value = self.points[self.order[mid]][d];
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split {
            dim: d,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The `k` nearest points as `(index, squared distance)`, nearest first;
    /// equal distances are ordered by index.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if self.len() <= SCAN_LIMIT {
            return Ok(self.scan(query, k));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.index, c.d2)).collect())
    }

    fn search(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: sq_dist(&self.points[i], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Equal distances must still be visited for the index tie rule.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }

    /// Exhaustive reference search with the same ordering rule.
    pub fn scan(&self, query: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<Candidate> = self
            .points
            .iter()
            .enumerate()
            .map(|(index, p)| Candidate {
                d2: sq_dist(p, query),
                index,
            })
            .collect();
        all.sort();
        all.truncate(k);
        all.into_iter().map(|c| (c.index, c.d2)).collect()
    }
}

/// Training features with their cluster classes and source bank poses.
#[derive(Debug, Clone)]
pub struct KnnModel {
    tree: KdTree,
    classes: Vec<usize>,
    pose_index: Vec<usize>,
    n_classes: usize,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct KnnRecord {
    kind: String,
    k: usize,
    n_classes: usize,
    features: Vec<Vec<f64>>,
    classes: Vec<usize>,
    pose_index: Vec<usize>,
}

pub(crate) const KNN_KIND: &str = "knn";

impl KnnModel {
    pub fn new(
        features: Vec<Vec<f64>>,
        classes: Vec<usize>,
        pose_index: Vec<usize>,
        n_classes: usize,
        k: usize,
    ) -> Result<Self> {
        if features.len() != classes.len() || features.len() != pose_index.len() {
            return Err(Error::LengthMismatch {
                what: "knn training labels",
                expected: features.len(),
                actual: classes.len().min(pose_index.len()),
            });
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "class {c} out of range for {n_classes} classes"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(Self {
            tree: KdTree::build(features)?,
            classes,
            pose_index,
            n_classes,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.tree.dim()
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.classes[i]
    }

    pub fn pose_of(&self, i: usize) -> usize {
        self.pose_index[i]
    }

    /// Vote distribution of the model's `k` nearest neighbours.
    pub fn proba(&self, v: &[f64]) -> Result<ClusterDistribution> {
        self.proba_k(v, self.k, None)
    }

    /// Vote distribution with `k` neighbours, optionally leaving one
    /// training point out.
    pub fn proba_k(&self, v: &[f64], k: usize, exclude: Option<usize>) -> Result<ClusterDistribution> {
        if k > self.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds {} training points",
                self.len()
            )));
        }
        let want = k + exclude.is_some() as usize;
        let mut votes = vec![0.0; self.n_classes];
        let mut taken = 0;
        for (i, _) in self.tree.nearest(v, want)? {
            if Some(i) == exclude || taken == k {
                continue;
            }
            votes[self.classes[i]] += 1.0;
            taken += 1;
        }
        ClusterDistribution::from_weights(votes)
    }

    /// Bank pose of the single nearest training feature.
    pub fn nearest_pose(&self, v: &[f64]) -> Result<usize> {
        Ok(self.pose_index[self.tree.nearest(v, 1)?[0].0])
    }

    /// Leave-one-out accuracy of the k-NN vote.
    pub fn leave_one_out_accuracy(&self) -> Result<f64> {
        if self.len() <= self.k {
            return Err(Error::InvalidParameter("too few points for leave-one-out".into()));
        }
        let mut hits = 0;
        for i in 0..self.len() {
            let d = self.proba_k(&self.tree.points()[i], self.k, Some(i))?;
            hits += (d.argmax() == self.classes[i]) as usize;
        }
        Ok(hits as f64 / self.len() as f64)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(KnnRecord {
            kind: KNN_KIND.into(),
            k: self.k,
            n_classes: self.n_classes,
            features: self.tree.points().to_vec(),
            classes: self.classes.clone(),
            pose_index: self.pose_index.clone(),
        })
        .expect("knn model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let rec: KnnRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "knn model".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if rec.kind != KNN_KIND {
            return Err(Error::Parse {
                path: "knn model".into(),
                line: 0,
                message: "not a knn model".into(),
            });
        }
        Self::new(rec.features, rec.classes, rec.pose_index, rec.n_classes, rec.k)
    }
}

/// k-NN vote over `(feature, class)` training pairs.
pub fn knn_proba(train: &[(Vec<f64>, usize)], v: &[f64], k: usize) -> Result<ClusterDistribution> {
    if train.is_empty() {
        return Err(Error::EmptyModel);
    }
    let n_classes = train.iter().map(|t| t.1).max().unwrap() + 1;
    let model = KnnModel::new(
        train.iter().map(|t| t.0.clone()).collect(),
        train.iter().map(|t| t.1).collect(),
        (0..train.len()).collect(),
        n_classes,
        k.max(1),
    )?;
    model.proba_k(v, k, None)
}
