//! Per-frame unary costs over exemplar poses and trellis pruning.

use serde::{Deserialize, Serialize};

use crate::classify::{dynamic_sit_stand, ClusterDistribution, SitStand};
use crate::clustering::{ClusterLabel, ExemplarBank};
use crate::error::{Error, Result};

/// How the static-clue mismatch penalty `d` is attached to poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchRule {
    /// Penalize poses whose cluster label contradicts a confident static clue.
    #[default]
    PerPose,
    /// Penalize every pose of a frame when the dynamic sit/stand decision
    /// contradicts a confident static clue.
    FrameConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub delta: f64,
    pub tau: f64,
    pub prune_threshold: f64,
    pub mismatch: MismatchRule,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            tau: 0.99,
            prune_threshold: 0.01,
            mismatch: MismatchRule::PerPose,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta = {}", self.delta)));
        }
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau = {} not in (0.5, 1]", self.tau)));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::InvalidParameter(format!(
                "prune threshold = {} not in [0, 1)",
                self.prune_threshold
            )));
        }
        Ok(())
    }
}

/// Sparse per-frame costs `e[n][i]`, entries sorted by pose index.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryCosts {
    frames: Vec<Vec<(usize, f64)>>,
}

impl UnaryCosts {
    pub fn new(mut frames: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (n, f) in frames.iter_mut().enumerate() {
            if f.is_empty() {
                return Err(Error::Infeasible { frame: n });
            }
            if f.iter().any(|e| !(e.1.is_finite() && e.1 >= 0.0)) {
                return Err(Error::InvalidParameter(format!("bad cost at frame {n}")));
            }
            f.sort_by_key(|e| e.0);
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Vec<(usize, f64)>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Vec<(usize, f64)>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

/// Penalty state of one frame: which cluster label (if any) is contradicted.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Penalty {
    None,
    /// Every pose pays `delta`.
    All,
    Label(ClusterLabel),
}

fn frame_penalty(
    dist: &ClusterDistribution,
    h: f64,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<Penalty> {
    let confident_sitting = h > params.tau;
    let confident_standing = h < 1.0 - params.tau;
    Ok(match params.mismatch {
        MismatchRule::PerPose => {
            if confident_sitting {
                Penalty::Label(ClusterLabel::StandingLike)
            } else if confident_standing {
                Penalty::Label(ClusterLabel::SittingLike)
            } else {
                Penalty::None
            }
        }
        MismatchRule::FrameConstant => {
            if !(confident_sitting || confident_standing) {
                return Ok(Penalty::None);
            }
            let dynamic = dynamic_sit_stand(dist, labels)?;
            match (confident_sitting, dynamic) {
                (true, SitStand::Standing) | (false, SitStand::Sitting) => Penalty::All,
                _ => Penalty::None,
            }
        }
    })
}

fn cost(dist: &ClusterDistribution, cluster: usize, label: ClusterLabel, penalty: Penalty, delta: f64) -> f64 {
    let d = match penalty {
        Penalty::None => 0.0,
        Penalty::All => delta,
        Penalty::Label(l) if l == label => delta,
        Penalty::Label(_) => 0.0,
    };
    // Guard the tiny negative values 1 - p can round to.
    (1.0 - dist.prob(cluster)).max(0.0) + d
}

fn check_inputs(
    dists: &[ClusterDistribution],
    h: &[f64],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
) -> Result<()> {
    if h.len() != dists.len() {
        return Err(Error::LengthMismatch {
            what: "static probabilities",
            expected: dists.len(),
            actual: h.len(),
        });
    }
    if labels.len() != bank.k() {
        return Err(Error::LengthMismatch {
            what: "cluster labels",
            expected: bank.k(),
            actual: labels.len(),
        });
    }
    if let Some(d) = dists.iter().find(|d| d.len() != bank.k()) {
        return Err(Error::LengthMismatch {
            what: "cluster distribution",
            expected: bank.k(),
            actual: d.len(),
        });
    }
    if bank.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(())
}

/// Dense costs over every bank pose for every frame.
pub fn unary_costs(
    dists: &[ClusterDistribution],
    h: &[f64],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<UnaryCosts> {
    params.validate()?;
    check_inputs(dists, h, bank, labels)?;
    let mut frames = Vec::with_capacity(dists.len());
    for (dist, &hn) in dists.iter().zip(h) {
        let penalty = frame_penalty(dist, hn, labels, params)?;
        frames.push(
            (0..bank.len())
                .map(|i| {
                    let c = bank.cluster_of(i);
                    (i, cost(dist, c, labels[c], penalty, params.delta))
                })
                .collect(),
        );
    }
    UnaryCosts::new(frames)
}

/// Drops poses whose cluster probability is at most the prune threshold.
/// A frame left empty keeps its single most probable pose (then lowest
/// cost, then lowest index).
pub fn prune(
    costs: &UnaryCosts,
    dists: &[ClusterDistribution],
    bank: &ExemplarBank,
    params: &CostParams,
) -> Result<UnaryCosts> {
    if dists.len() != costs.len() {
        return Err(Error::LengthMismatch {
            what: "cluster distributions",
            expected: costs.len(),
            actual: dists.len(),
        });
    }
    let frames = costs
        .frames
        .iter()
        .zip(dists)
        .map(|(entries, dist)| {
            let kept: Vec<(usize, f64)> = entries
                .iter()
                .copied()
                .filter(|&(i, _)| dist.prob(bank.cluster_of(i)) > params.prune_threshold)
                .collect();
            if !kept.is_empty() {
                return kept;
            }
            let best = entries
                .iter()
                .copied()
                .min_by(|a, b| {
                    let (pa, pb) = (dist.prob(bank.cluster_of(a.0)), dist.prob(bank.cluster_of(b.0)));
                    pb.total_cmp(&pa)
                        .then(a.1.total_cmp(&b.1))
                        .then(a.0.cmp(&b.0))
                })
                .expect("frames are nonempty");
            vec![best]
        })
        .collect();
    UnaryCosts::new(frames)
}

/// `prune(unary_costs(..))` without materializing the dense table.
pub fn pruned_unary_costs(
    dists: &[ClusterDistribution],
    h: &[f64],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<UnaryCosts> {
    params.validate()?;
    check_inputs(dists, h, bank, labels)?;
    let members = bank.members_by_cluster();
    let mut frames = Vec::with_capacity(dists.len());
    for (dist, &hn) in dists.iter().zip(h) {
        let penalty = frame_penalty(dist, hn, labels, params)?;
        let entry = |i: usize| {
            let c = bank.cluster_of(i);
            (i, cost(dist, c, labels[c], penalty, params.delta))
        };
        let mut kept: Vec<(usize, f64)> = (0..bank.k())
            .filter(|&c| dist.prob(c) > params.prune_threshold)
            .flat_map(|c| members[c].iter().map(|&i| entry(i)))
            .collect();
        if kept.is_empty() {
            // Fallback: most probable non-empty cluster, then cheapest pose.
            let mut best: Option<(usize, f64)> = None;
            let mut best_p = f64::NEG_INFINITY;
            for c in (0..bank.k()).filter(|&c| !members[c].is_empty()) {
                let p = dist.prob(c);
                for &i in &members[c] {
                    let e = entry(i);
                    let better = match best {
                        None => true,
                        Some(b) => p > best_p || (p == best_p && (e.1 < b.1 || (e.1 == b.1 && e.0 < b.0))),
                    };
                    if better {
                        best = Some(e);
                        best_p = p;
                    }
                }
            }
            kept.push(best.ok_or(Error::EmptyModel)?);
        }
        frames.push(kept);
    }
    UnaryCosts::new(frames)
}

/// Costs of the given bank poses at one frame.
pub fn costs_for_poses(
    dist: &ClusterDistribution,
    h: f64,
    poses: &[usize],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<Vec<(usize, f64)>> {
    let penalty = frame_penalty(dist, h, labels, params)?;
    Ok(poses
        .iter()
        .map(|&i| {
            let c = bank.cluster_of(i);
            (i, cost(dist, c, labels[c], penalty, params.delta))
        })
        .collect())
}
