//! Random forest of fully grown Gini trees over stacked homography features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            seed: 0,
        }
    }
}

/// Arena node; children are indices into the owning tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Sparse `(class, count)` histogram of bootstrap samples at the leaf.
    Leaf { hist: Vec<(usize, u32)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Leaf histogram reached by `v`.
    pub fn leaf(&self, v: &[f64]) -> &[(usize, u32)] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if v[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { hist } => return hist,
            }
        }
    }

    fn add_leaf_distribution(&self, v: &[f64], out: &mut [f64]) {
        let hist = self.leaf(v);
        let total: u32 = hist.iter().map(|h| h.1).sum();
        for &(c, n) in hist {
            out[c] += n as f64 / total as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    feature_dim: usize,
    n_classes: usize,
    oob_accuracy: Option<f64>,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Out-of-bag accuracy measured at training time.
    pub fn oob_accuracy(&self) -> Option<f64> {
        self.oob_accuracy
    }

    pub fn from_trees(trees: Vec<Tree>, feature_dim: usize, n_classes: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::EmptyModel);
        }
        for t in &trees {
            for node in &t.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        if *feature >= feature_dim || *left >= t.nodes.len() || *right >= t.nodes.len() {
                            return Err(Error::InvalidParameter("tree node out of range".into()));
                        }
                    }
                    TreeNode::Leaf { hist } => {
                        if hist.is_empty() || hist.iter().any(|&(c, _)| c >= n_classes) {
                            return Err(Error::InvalidParameter("bad leaf histogram".into()));
                        }
                    }
                }
            }
        }
        Ok(Self {
            trees,
            feature_dim,
            n_classes,
            oob_accuracy: None,
        })
    }
}

/// Trains a forest; class ids must lie in `0..n_classes`.
pub fn train_forest(
    features: &[Vec<f64>],
    classes: &[usize],
    n_classes: usize,
    params: ForestParams,
) -> Result<ForestModel> {
    if features.len() != classes.len() {
        return Err(Error::LengthMismatch {
            what: "training classes",
            expected: features.len(),
            actual: classes.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::EmptyModel);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidParameter(format!(
            "class {c} out of range for {n_classes} classes"
        )));
    }
    if classes.iter().all(|&c| c == classes[0]) {
        return Err(Error::DegenerateLabels);
    }

    let n = features.len();
    let mut seeder = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| seeder.random()).collect();
    let built: Vec<(Tree, Vec<bool>)> = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            let tree = TreeBuilder::new(features, classes, n_classes).grow(sample, &mut rng);
            (tree, in_bag)
        })
        .collect();

    let mut votes = vec![vec![0.0; n_classes]; n];
    let mut voted = vec![false; n];
    for (tree, in_bag) in &built {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            tree.add_leaf_distribution(&features[i], &mut votes[i]);
            voted[i] = true;
        }
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for i in (0..n).filter(|&i| voted[i]) {
        total += 1;
        let pred = argmax(&votes[i]);
        hits += (pred == classes[i]) as usize;
    }

    Ok(ForestModel {
        trees: built.into_iter().map(|(t, _)| t).collect(),
        feature_dim: dim,
        n_classes,
        oob_accuracy: (total > 0).then(|| hits as f64 / total as f64),
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean of per-tree normalized leaf histograms.
pub fn forest_proba(m: &ForestModel, v: &[f64]) -> Result<ClusterDistribution> {
    if v.len() != m.feature_dim {
        return Err(Error::DimMismatch {
            expected: m.feature_dim,
            actual: v.len(),
        });
    }
    let mut acc = vec![0.0; m.n_classes];
    for t in &m.trees {
        t.add_leaf_distribution(v, &mut acc);
    }
    let nt = m.trees.len() as f64;
    acc.iter_mut().for_each(|p| *p /= nt);
    ClusterDistribution::from_weights(acc)
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    classes: &'a [usize],
    n_classes: usize,
    n_candidates: usize,
}

struct Pending {
    parent: Option<(usize, bool)>,
    samples: Vec<usize>,
}

impl<'a> TreeBuilder<'a> {
    fn new(features: &'a [Vec<f64>], classes: &'a [usize], n_classes: usize) -> Self {
        let dim = features[0].len();
        Self {
            features,
            classes,
            n_classes,
            n_candidates: ((dim as f64).sqrt().ceil() as usize).clamp(1, dim),
        }
    }

    fn grow(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        // Nodes are laid out in preorder, matching the JSON loader.
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut stack = vec![Pending {
            parent: None,
            samples: sample,
        }];
        let dim = self.features[0].len();
        let mut order: Vec<usize> = (0..dim).collect();
        while let Some(Pending { parent, samples }) = stack.pop() {
            let at = nodes.len();
            link(&mut nodes, parent, at);
            let pure = samples.iter().all(|&i| self.classes[i] == self.classes[samples[0]]);
            let split = if pure || samples.len() < 2 {
                None
            } else {
                order.shuffle(rng);
                self.best_split(&samples, &order)
            };
            match split {
                None => nodes.push(TreeNode::Leaf { hist: self.histogram(&samples) }),
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .iter()
                        .partition(|&&i| self.features[i][feature] <= threshold);
                    nodes.push(TreeNode::Split {
                        feature,
                        threshold,
                        left: 0,
                        right: 0,
                    });
                    stack.push(Pending {
                        parent: Some((at, false)),
                        samples: r,
                    });
                    stack.push(Pending {
                        parent: Some((at, true)),
                        samples: l,
                    });
                }
            }
        }
        Tree { nodes }
    }

    fn histogram(&self, samples: &[usize]) -> Vec<(usize, u32)> {
        let mut counts = std::collections::BTreeMap::new();
        for &i in samples {
            *counts.entry(self.classes[i]).or_insert(0u32) += 1;
        }
        counts.into_iter().collect()
    }

    /// Best Gini split over the first `n_candidates` features of `order`;
    /// falls through to the remaining features only when none of those can
    /// separate the node.
    fn best_split(&self, samples: &[usize], order: &[usize]) -> Option<(usize, f64)> {
        let mut total = vec![0u32; self.n_classes];
        for &i in samples {
            total[self.classes[i]] += 1;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        let mut left = vec![0u32; self.n_classes];
        for (rank, &f) in order.iter().enumerate() {
            if rank >= self.n_candidates && best.is_some() {
                break;
            }
            values.clear();
            values.extend(samples.iter().map(|&i| (self.features[i][f], self.classes[i])));
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            if values[0].0 == values[values.len() - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            let n = values.len() as f64;
            let mut sq_left = 0.0;
            let mut sq_right: f64 = total.iter().map(|&c| (c as f64).powi(2)).sum();
            for k in 0..values.len() - 1 {
                let c = values[k].1;
                let (l, r) = (left[c] as f64, (total[c] - left[c]) as f64);
                sq_left += 2.0 * l + 1.0;
                sq_right -= 2.0 * r - 1.0;
                left[c] += 1;
                if values[k].0 == values[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                // n times the weighted Gini impurity of the split.
                let score = (nl - sq_left / nl) + (nr - sq_right / nr);
                if best.is_none_or(|b| score < b.0) {
                    let (a, b) = (values[k].0, values[k + 1].0);
                    let mut mid = 0.5 * (a + b);
                    if !(mid < b) {
                        mid = a;
                    }
                    best = Some((score, f, mid));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Serialized node: `{"feat", "thresh", "left", "right"}` or `{"hist"}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRecord {
    Split {
        feat: usize,
        thresh: f64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        hist: Vec<(usize, u32)>,
    },
}

#[derive(Serialize, Deserialize)]
struct ForestRecord {
    kind: String,
    n_trees: usize,
    feature_dim: usize,
    n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oob_accuracy: Option<f64>,
    trees: Vec<NodeRecord>,
}

impl Tree {
    fn to_record(&self) -> NodeRecord {
        fn go(nodes: &[TreeNode], at: usize) -> NodeRecord {
            match &nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeRecord::Split {
                    feat: *feature,
                    thresh: *threshold,
                    left: Box::new(go(nodes, *left)),
                    right: Box::new(go(nodes, *right)),
                },
                TreeNode::Leaf { hist } => NodeRecord::Leaf { hist: hist.clone() },
            }
        }
        go(&self.nodes, 0)
    }

    fn from_record(rec: NodeRecord) -> Tree {
        let mut nodes = Vec::new();
        let mut stack = vec![(rec, None::<(usize, bool)>)];
        while let Some((r, parent)) = stack.pop() {
            let at = nodes.len();
            link(&mut nodes, parent, at);
            match r {
                NodeRecord::Split {
                    feat,
                    thresh,
                    left,
                    right,
                } => {
                    nodes.push(TreeNode::Split {
                        feature: feat,
                        threshold: thresh,
                        left: 0,
                        right: 0,
                    });
                    stack.push((*right, Some((at, false))));
                    stack.push((*left, Some((at, true))));
                }
                NodeRecord::Leaf { hist } => nodes.push(TreeNode::Leaf { hist }),
            }
        }
        Tree { nodes }
    }
}

fn link(nodes: &mut [TreeNode], parent: Option<(usize, bool)>, at: usize) {
    if let Some((p, is_left)) = parent {
        if let TreeNode::Split { left, right, .. } = &mut nodes[p] {
            if is_left {
                *left = at;
            } else {
                *right = at;
            }
        }
    }
}

pub(crate) const FOREST_KIND: &str = "forest";

impl ForestModel {
    pub fn to_json(&self) -> serde_json::Value {
        let rec = ForestRecord {
            kind: FOREST_KIND.into(),
            n_trees: self.trees.len(),
            feature_dim: self.feature_dim,
            n_classes: self.n_classes,
            oob_accuracy: self.oob_accuracy,
            trees: self.trees.iter().map(Tree::to_record).collect(),
        };
        serde_json::to_value(rec).expect("forest serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let rec = ForestRecord::deserialize(&mut de).map_err(|e| Error::Parse {
            path: "forest model".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if rec.kind != FOREST_KIND || rec.trees.len() != rec.n_trees {
            return Err(Error::Parse {
                path: "forest model".into(),
                line: 0,
                message: "not a forest model".into(),
            });
        }
        let trees = rec.trees.into_iter().map(Tree::from_record).collect();
        let mut m = Self::from_trees(trees, rec.feature_dim, rec.n_classes)?;
        m.oob_accuracy = rec.oob_accuracy;
        Ok(m)
    }
}
