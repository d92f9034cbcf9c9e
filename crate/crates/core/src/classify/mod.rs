//! Per-frame soft classifiers over pose clusters and the sitting/standing
//! clues derived from them.

mod forest;
mod knn;
mod static_clue;

pub use forest::{forest_proba, train_forest, ForestModel, ForestParams, TreeNode};
pub use knn::{knn_proba, KdTree, KnnModel};
pub use static_clue::{ConstantStatic, FileStatic, StaticProvider, NEUTRAL_SITTING_PROBABILITY};

use crate::clustering::ClusterLabel;
use crate::error::{Error, Result};

/// Probability of a feature window matching each pose cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistribution {
    probs: Vec<f64>,
}

impl ClusterDistribution {
    /// Normalizes nonnegative weights to sum 1.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { probs: weights })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, cluster: usize) -> f64 {
        self.probs[cluster]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable cluster; ties go to the lowest id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }
}

/// Sit/stand decision of the dynamic classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SitStand {
    Sitting,
    Standing,
}

/// Sitting iff the sitting-like clusters carry more than half the mass.
pub fn dynamic_sit_stand(d: &ClusterDistribution, labels: &[ClusterLabel]) -> Result<SitStand> {
    if labels.len() != d.len() {
        return Err(Error::LengthMismatch {
            what: "cluster labels",
            expected: d.len(),
            actual: labels.len(),
        });
    }
    let sitting: f64 = d
        .probs
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == ClusterLabel::SittingLike)
        .map(|(p, _)| p)
        .sum();
    Ok(if sitting > 0.5 {
        SitStand::Sitting
    } else {
        SitStand::Standing
    })
}
