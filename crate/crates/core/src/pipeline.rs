//! End-to-end wiring: clustering, classifier training and inference.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{forest_proba, train_forest, ClusterDistribution, ForestModel, ForestParams, KnnModel};
use crate::clustering::{
    kmeans, label_clusters, sit_threshold, ClusterLabel, ClusterModel, ExemplarBank, KMeansResult,
};
use crate::config::{FeatureMode, PipelineConfig};
use crate::costs::{costs_for_poses, pruned_unary_costs, CostParams, UnaryCosts};
use crate::error::{Error, Result};
use crate::eval::{baseline_constant_bank, ConstantMode};
use crate::geometry::{feature_window, rotation_from_homography, valid_centers, Homography};
use crate::pathopt::{solve_exact_dp, solve_paper_dp, PosePath, Trellis};
use crate::skeleton::{hip_height, normalize_pose, Frame, Pose, PoseSequence};

/// One feature vector per frame. Frames too close to either end for a full
/// window reuse the window of the nearest frame that has one.
pub fn frame_features(hs: &[Homography], cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let n = hs.len() + 1;
    let centers = valid_centers(n, cfg.window);
    if centers.is_empty() {
        return Err(Error::OutOfRange {
            start: 0,
            end: cfg.window as i64 - 1,
            len: n,
        });
    }
    let hs = match cfg.feature_mode {
        FeatureMode::Homography => hs.to_vec(),
        FeatureMode::Rotation => {
            let k = cfg.intrinsics.camera()?;
            hs.iter()
                .map(|h| Homography::normalize(&rotation_from_homography(h, &k)?))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let windows = centers
        .clone()
        .map(|c| feature_window(&hs, c, cfg.window).map(|f| f.values))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|f| windows[f.clamp(centers.start, centers.end - 1) - centers.start].clone())
        .collect())
}

/// Wearer-local copies of `poses`; sensor-frame poses are normalized with
/// the configured up vector.
pub fn to_local(poses: &[Pose], cfg: &PipelineConfig) -> Result<Vec<Pose>> {
    let up = cfg.up_vector();
    poses
        .iter()
        .map(|p| match p.frame() {
            Frame::WearerLocal => Ok(p.clone()),
            Frame::Sensor => normalize_pose(p, &up),
        })
        .collect()
}

pub struct Clustering {
    pub model: ClusterModel,
    pub bank: ExemplarBank,
    pub kmeans: KMeansResult,
    /// Hip height separating sitting-like from standing-like centroids.
    pub sit_threshold: f64,
}

/// Clusters the training poses, labels clusters by hip height and builds
/// the exemplar bank (one sequence per input).
pub fn cluster_sequences(sequences: &[PoseSequence], cfg: &PipelineConfig) -> Result<Clustering> {
    cfg.validate()?;
    let local = sequences
        .iter()
        .map(|s| to_local(s.poses(), cfg))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<Pose> = local.iter().flatten().cloned().collect();
    let km = kmeans(&all, cfg.k, cfg.seed, cfg.kmeans_max_iters)?;
    let heights: Vec<f64> = all.iter().map(|p| hip_height(&p.to_vec())).collect();
    let theta = sit_threshold(&heights)?;
    let labels = label_clusters(&km.model, theta);
    let model = km.model.clone().with_labels(labels)?;
    let bank = ExemplarBank::build(&local, &model)?;
    Ok(Clustering {
        model,
        bank,
        kmeans: km,
        sit_threshold: theta,
    })
}

/// Training examples: one per full window, labelled with the bank cluster of
/// the window's centre pose.
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub pose_index: Vec<usize>,
}

/// `motions[s]` holds the homographies of the bank's `s`-th sequence.
pub fn training_set(bank: &ExemplarBank, motions: &[Vec<Homography>], cfg: &PipelineConfig) -> Result<TrainingSet> {
    let ranges = bank.sequence_ranges();
    if ranges.len() != motions.len() {
        return Err(Error::LengthMismatch {
            what: "training motion sequences",
            expected: ranges.len(),
            actual: motions.len(),
        });
    }
    let mut set = TrainingSet {
        features: Vec::new(),
        classes: Vec::new(),
        pose_index: Vec::new(),
    };
    for (range, hs) in ranges.iter().zip(motions) {
        if hs.len() + 1 != range.len() {
            return Err(Error::LengthMismatch {
                what: "frames of training motion",
                expected: range.len(),
                actual: hs.len() + 1,
            });
        }
        let feats = frame_features(hs, cfg)?;
        for c in valid_centers(range.len(), cfg.window) {
            let pose = range.start + c;
            set.features.push(feats[c].clone());
            set.classes.push(bank.cluster_of(pose));
            set.pose_index.push(pose);
        }
    }
    if set.features.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Forest,
    Knn,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(Self::Forest),
            "knn" => Ok(Self::Knn),
            _ => Err(Error::InvalidParameter(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn train(kind: ClassifierKind, set: &TrainingSet, n_classes: usize, cfg: &PipelineConfig) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Forest => Self::Forest(train_forest(
                &set.features,
                &set.classes,
                n_classes,
                ForestParams {
                    n_trees: cfg.trees,
                    seed: cfg.seed,
                },
            )?),
            ClassifierKind::Knn => Self::Knn(KnnModel::new(
                set.features.clone(),
                set.classes.clone(),
                set.pose_index.clone(),
                n_classes,
                cfg.knn_k,
            )?),
        })
    }

    pub fn proba(&self, v: &[f64]) -> Result<ClusterDistribution> {
        match self {
            Self::Forest(m) => forest_proba(m, v),
            Self::Knn(m) => m.proba(v),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_classes(),
            Self::Knn(m) => m.n_classes(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Forest(m) => m.to_json(),
            Self::Knn(m) => m.to_json(),
        }
    }

    /// Dispatches on the record's `kind` field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Kind {
            kind: String,
        }
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let k = Kind::deserialize(&mut de).map_err(|e| Error::Parse {
            path: "classifier model".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        match k.kind.as_str() {
            "forest" => Ok(Self::Forest(ForestModel::from_json_str(text)?)),
            "knn" => Ok(Self::Knn(KnnModel::from_json_str(text)?)),
            other => Err(Error::Parse {
                path: "classifier model".into(),
                line: 0,
                message: format!("unknown classifier kind {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Paper,
    Exact,
    PathCluster,
    Kdtree,
    AlwaysStanding,
    AlwaysSitting,
}

impl Solver {
    pub const ALL: [Solver; 6] = [
        Solver::Paper,
        Solver::Exact,
        Solver::PathCluster,
        Solver::Kdtree,
        Solver::AlwaysStanding,
        Solver::AlwaysSitting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Paper => "paper",
            Solver::Exact => "exact",
            Solver::PathCluster => "path-cluster",
            Solver::Kdtree => "kdtree",
            Solver::AlwaysStanding => "always-standing",
            Solver::AlwaysSitting => "always-sitting",
        }
    }

    pub fn needs_classifier(self) -> bool {
        !matches!(self, Solver::AlwaysStanding | Solver::AlwaysSitting)
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver {s:?}")))
    }
}

/// Cumulative wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timing {
    pub frames: usize,
    pub features: f64,
    pub classify: f64,
    pub costs: f64,
    pub solve: f64,
    pub total: f64,
}

impl Timing {
    pub fn per_frame(&self, seconds: f64) -> f64 {
        seconds / self.frames.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub solver: Solver,
    /// Bank exemplar chosen per frame; `None` for the constant baselines.
    pub exemplars: Option<Vec<usize>>,
    pub path: Option<PosePath>,
    pub poses: Vec<Pose>,
    /// Predicted stance per frame.
    pub sitting: Vec<bool>,
    /// Trellis nodes per frame after pruning and repair.
    pub candidates: Vec<usize>,
    /// Frames that needed extra candidates to stay reachable.
    pub repaired_frames: usize,
    pub timing: Timing,
}

/// Adds candidates to any frame with no node reachable from the previous
/// frame. The added poses are the members of one cluster among the
/// neighbors of the previous frame's reachable clusters: the one closest in
/// the cluster graph to the frame's own candidates, then the most probable,
/// then the lowest id. Repeated repairs thus walk the path towards the
/// classifier's choices one cluster per frame.
pub fn ensure_reachable(
    costs: UnaryCosts,
    dists: &[ClusterDistribution],
    h: &[f64],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<(UnaryCosts, usize)> {
    let k = bank.k();
    let members = bank.members_by_cluster();
    let mut frames = costs.into_frames();
    let mut repaired = 0;
    let mut prev = vec![false; k];
    if let Some(first) = frames.first() {
        for &(i, _) in first {
            prev[bank.cluster_of(i)] = true;
        }
    }
    for n in 1..frames.len() {
        let mut allowed = vec![false; k];
        for c in (0..k).filter(|&c| prev[c]) {
            for &m in bank.neighbors(c) {
                allowed[m] = true;
            }
        }
        if !frames[n].iter().any(|&(i, _)| allowed[bank.cluster_of(i)]) {
            let hops = graph_distances(bank, frames[n].iter().map(|&(i, _)| bank.cluster_of(i)));
            let best = (0..k)
                .filter(|&c| allowed[c] && !members[c].is_empty())
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if (hops[b], -dists[n].prob(b)) <= (hops[c], -dists[n].prob(c)) => Some(b),
                    _ => Some(c),
                })
                .ok_or(Error::Infeasible { frame: n })?;
            frames[n].extend(costs_for_poses(&dists[n], h[n], &members[best], bank, labels, params)?);
            frames[n].sort_by_key(|e| e.0);
            repaired += 1;
        }
        prev = vec![false; k];
        for &(i, _) in &frames[n] {
            let c = bank.cluster_of(i);
            if allowed[c] {
                prev[c] = true;
            }
        }
    }
    Ok((UnaryCosts::new(frames)?, repaired))
}

/// Breadth-first hop counts in the cluster neighbor graph from `sources`;
/// unreachable clusters get `usize::MAX`.
fn graph_distances(bank: &ExemplarBank, sources: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut dist = vec![usize::MAX; bank.k()];
    let mut queue = std::collections::VecDeque::new();
    for c in sources {
        if dist[c] != 0 {
            dist[c] = 0;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for &m in bank.neighbors(c) {
            if dist[m] == usize::MAX {
                dist[m] = dist[c] + 1;
                queue.push_back(m);
            }
        }
    }
    dist
}

/// Candidates restricted to each frame's most probable cluster.
fn argmax_cluster_costs(
    dists: &[ClusterDistribution],
    h: &[f64],
    bank: &ExemplarBank,
    labels: &[ClusterLabel],
    params: &CostParams,
) -> Result<UnaryCosts> {
    let members = bank.members_by_cluster();
    let frames = dists
        .iter()
        .zip(h)
        .map(|(d, &hn)| {
            // The most probable cluster that has members in the bank.
            let c = (0..bank.k())
                .filter(|&c| !members[c].is_empty())
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if d.prob(b) >= d.prob(c) => Some(b),
                    _ => Some(c),
                })
                .ok_or(Error::EmptyModel)?;
            costs_for_poses(d, hn, &members[c], bank, labels, params)
        })
        .collect::<Result<Vec<_>>>()?;
    UnaryCosts::new(frames)
}

pub struct InferenceInput<'a> {
    pub bank: &'a ExemplarBank,
    pub labels: &'a [ClusterLabel],
    pub classifier: Option<&'a Classifier>,
    pub homographies: &'a [Homography],
    /// Static sitting probability per frame.
    pub static_h: &'a [f64],
}

pub fn infer(input: &InferenceInput, solver: Solver, cfg: &PipelineConfig) -> Result<Inference> {
    cfg.validate()?;
    let start = Instant::now();
    let bank = input.bank;
    let labels = input.labels;
    if labels.len() != bank.k() {
        return Err(Error::LengthMismatch {
            what: "cluster labels",
            expected: bank.k(),
            actual: labels.len(),
        });
    }
    let n = input.homographies.len() + 1;
    if input.static_h.len() != n {
        return Err(Error::LengthMismatch {
            what: "static probabilities",
            expected: n,
            actual: input.static_h.len(),
        });
    }
    let mut timing = Timing {
        frames: n,
        ..Timing::default()
    };
    let is_sitting = |i: usize| labels[bank.cluster_of(i)] == ClusterLabel::SittingLike;

    let constant = match solver {
        Solver::AlwaysStanding => Some(ConstantMode::Standing),
        Solver::AlwaysSitting => Some(ConstantMode::Sitting),
        _ => None,
    };
    if let Some(mode) = constant {
        let pose = baseline_constant_bank(bank, labels, mode)?;
        timing.total = start.elapsed().as_secs_f64();
        return Ok(Inference {
            solver,
            exemplars: None,
            path: None,
            poses: vec![pose; n],
            sitting: vec![mode == ConstantMode::Sitting; n],
            candidates: vec![0; n],
            repaired_frames: 0,
            timing,
        });
    }

    let classifier = input
        .classifier
        .ok_or_else(|| Error::InvalidParameter(format!("solver {solver} needs a classifier model")))?;
    if classifier.n_classes() != bank.k() {
        return Err(Error::DimMismatch {
            expected: bank.k(),
            actual: classifier.n_classes(),
        });
    }
    let t = Instant::now();
    let features = frame_features(input.homographies, cfg)?;
    timing.features = t.elapsed().as_secs_f64();

    if solver == Solver::Kdtree {
        let Classifier::Knn(knn) = classifier else {
            return Err(Error::InvalidParameter("the kdtree solver needs a knn classifier model".into()));
        };
        let t = Instant::now();
        let exemplars = features
            .par_iter()
            .map(|v| knn.nearest_pose(v))
            .collect::<Result<Vec<_>>>()?;
        timing.classify = t.elapsed().as_secs_f64();
        timing.total = start.elapsed().as_secs_f64();
        return Ok(Inference {
            solver,
            poses: exemplars.iter().map(|&i| bank.pose(i).clone()).collect(),
            sitting: exemplars.iter().map(|&i| is_sitting(i)).collect(),
            exemplars: Some(exemplars),
            path: None,
            candidates: vec![1; n],
            repaired_frames: 0,
            timing,
        });
    }

    let t = Instant::now();
    let dists = features
        .par_iter()
        .map(|v| classifier.proba(v))
        .collect::<Result<Vec<_>>>()?;
    timing.classify = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let costs = if solver == Solver::PathCluster {
        argmax_cluster_costs(&dists, input.static_h, bank, labels, &cfg.costs)?
    } else {
        pruned_unary_costs(&dists, input.static_h, bank, labels, &cfg.costs)?
    };
    let (costs, repaired_frames) = ensure_reachable(costs, &dists, input.static_h, bank, labels, &cfg.costs)?;
    let candidates = costs.frames().iter().map(Vec::len).collect();
    let trellis = Trellis::from_costs(bank, &costs)?;
    timing.costs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let path = match solver {
        Solver::Exact => solve_exact_dp(&trellis, &cfg.path)?,
        _ => solve_paper_dp(&trellis, &cfg.path)?,
    };
    timing.solve = t.elapsed().as_secs_f64();
    timing.total = start.elapsed().as_secs_f64();
    Ok(Inference {
        solver,
        poses: path.indices.iter().map(|&i| bank.pose(i).clone()).collect(),
        sitting: path.indices.iter().map(|&i| is_sitting(i)).collect(),
        exemplars: Some(path.indices.clone()),
        path: Some(path),
        candidates,
        repaired_frames,
        timing,
    })
}

/// Fraction of frames whose predicted stance differs from the truth.
pub fn sit_stand_error(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "stance labels",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyModel);
    }
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathopt::energy_of_path;
    use crate::synth::{default_camera, generate, MotionScript, Primitive, Segment};

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            k: 12,
            window: 10,
            trees: 10,
            knn_k: 3,
            ..PipelineConfig::default()
        }
    }

    fn scripted(seed: u64, frames: usize) -> crate::synth::SynthOutput {
        let mut s = MotionScript::random(frames, seed);
        s.joint_jitter = 0.005;
        generate(&s, &default_camera()).unwrap()
    }

    #[test]
    fn features_reuse_nearest_window() {
        let out = scripted(1, 60);
        let cfg = small_cfg();
        let f = frame_features(&out.homographies, &cfg).unwrap();
        assert_eq!(f.len(), out.poses.len());
        assert!(f.iter().all(|v| v.len() == 9 * (cfg.window - 1)));
        let centers = valid_centers(out.poses.len(), cfg.window);
        assert_eq!(f[0], f[centers.start]);
        assert_eq!(f[out.poses.len() - 1], f[centers.end - 1]);
        assert_eq!(
            f[centers.start + 3],
            feature_window(&out.homographies, centers.start + 3, cfg.window).unwrap().values
        );
        assert!(matches!(frame_features(&out.homographies[..3], &cfg), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn rotation_features_are_top_left_normalized() {
        let out = scripted(2, 60);
        let cfg = PipelineConfig {
            feature_mode: FeatureMode::Rotation,
            ..small_cfg()
        };
        let f = frame_features(&out.homographies, &cfg).unwrap();
        assert!(f.iter().all(|v| v.chunks(9).all(|h| h[0] == 1.0)));
    }

    #[test]
    fn clustering_labels_sitting_clusters_low() {
        let out = scripted(3, 900);
        let c = cluster_sequences(&[out.poses.clone()], &small_cfg()).unwrap();
        let labels = c.model.labels().unwrap();
        assert!(labels.contains(&ClusterLabel::SittingLike) && labels.contains(&ClusterLabel::StandingLike));
        // Ground-truth seated frames land in sitting-like clusters.
        let agree = out
            .sitting
            .iter()
            .enumerate()
            .filter(|&(i, &s)| s == (labels[c.bank.cluster_of(i)] == ClusterLabel::SittingLike))
            .count();
        assert!(agree as f64 > 0.9 * out.sitting.len() as f64);
    }

    fn reachable_bank() -> (ExemplarBank, Vec<ClusterLabel>) {
        // Clusters 0 - 1 - 2 in a chain; 0 and 2 are not neighbors.
        let p = Pose::from_slice(&[0.0; crate::skeleton::POSE_DIM], Frame::WearerLocal).unwrap();
        let bank = ExemplarBank::from_parts(
            vec![p; 6],
            vec![0, 0, 1, 1, 2, 2],
            vec![],
            vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]],
        )
        .unwrap();
        (bank, vec![ClusterLabel::StandingLike; 3])
    }

    #[test]
    fn repair_adds_bridging_cluster() {
        let (bank, labels) = reachable_bank();
        let dists = vec![
            ClusterDistribution::from_weights(vec![1.0, 0.0, 0.0]).unwrap(),
            ClusterDistribution::from_weights(vec![0.0, 0.3, 0.7]).unwrap(),
        ];
        let h = vec![0.5; 2];
        let params = CostParams::default();
        let costs = UnaryCosts::new(vec![vec![(0, 0.0), (1, 0.0)], vec![(4, 0.3), (5, 0.3)]]).unwrap();
        let tr = Trellis::from_costs(&bank, &costs).unwrap();
        assert!(solve_paper_dp(&tr, &crate::pathopt::PathParams::default()).is_err());
        let (fixed, repaired) = ensure_reachable(costs, &dists, &h, &bank, &labels, &params).unwrap();
        assert_eq!(repaired, 1);
        let idx: Vec<usize> = fixed.frames()[1].iter().map(|e| e.0).collect();
        assert_eq!(idx, vec![2, 3, 4, 5]);
        assert!((fixed.frames()[1][0].1 - 0.7).abs() < 1e-12);
        let tr = Trellis::from_costs(&bank, &fixed).unwrap();
        let p = solve_paper_dp(&tr, &crate::pathopt::PathParams::default()).unwrap();
        energy_of_path(&p.indices, &tr, &crate::pathopt::PathParams::default()).unwrap();
    }

    #[test]
    fn repair_leaves_feasible_costs_alone() {
        let (bank, labels) = reachable_bank();
        let dists = vec![ClusterDistribution::uniform(3); 3];
        let costs = UnaryCosts::new(vec![vec![(0, 0.1)], vec![(2, 0.2)], vec![(5, 0.0)]]).unwrap();
        let (fixed, repaired) =
            ensure_reachable(costs.clone(), &dists, &[0.5; 3], &bank, &labels, &CostParams::default()).unwrap();
        assert_eq!(repaired, 0);
        assert_eq!(fixed, costs);
    }

    #[test]
    fn solver_names_round_trip() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("viterbi".parse::<Solver>().is_err());
    }

    #[test]
    fn stance_error() {
        assert_eq!(sit_stand_error(&[true, false, true, true], &[true, true, true, false]).unwrap(), 0.5);
        assert!(sit_stand_error(&[true], &[]).is_err());
    }

    #[test]
    fn end_to_end_small() {
        let cfg = small_cfg();
        let train = scripted(10, 600);
        let c = cluster_sequences(&[train.poses.clone()], &cfg).unwrap();
        let set = training_set(&c.bank, &[train.homographies.clone()], &cfg).unwrap();
        assert_eq!(set.features.len(), train.poses.len() - cfg.window + 1);
        let labels = c.model.labels().unwrap().to_vec();

        let mut test_script = MotionScript::new(
            vec![
                Segment { primitive: Primitive::Walk, frames: 60 },
                Segment { primitive: Primitive::SitDown, frames: 40 },
                Segment { primitive: Primitive::SitIdle, frames: 60 },
                Segment { primitive: Primitive::StandUp, frames: 40 },
            ],
            99,
        );
        test_script.joint_jitter = 0.005;
        let test = generate(&test_script, &default_camera()).unwrap();
        for kind in [ClassifierKind::Forest, ClassifierKind::Knn] {
            let clf = Classifier::train(kind, &set, c.bank.k(), &cfg).unwrap();
            let reloaded = Classifier::from_json_str(&clf.to_json().to_string()).unwrap();
            assert_eq!(reloaded.to_json(), clf.to_json());
            let input = InferenceInput {
                bank: &c.bank,
                labels: &labels,
                classifier: Some(&clf),
                homographies: &test.homographies,
                static_h: &test.static_h,
            };
            for solver in [Solver::Paper, Solver::PathCluster, Solver::AlwaysSitting] {
                let r = infer(&input, solver, &cfg).unwrap();
                assert_eq!(r.poses.len(), test.poses.len());
                if let Some(p) = &r.path {
                    let e = p.energy;
                    assert!((e.unary + e.step + e.speed + e.stationary - e.total).abs() < 1e-9);
                }
            }
            if kind == ClassifierKind::Knn {
                let r = infer(&input, Solver::Kdtree, &cfg).unwrap();
                assert_eq!(r.exemplars.unwrap().len(), test.poses.len());
            } else {
                assert!(infer(&input, Solver::Kdtree, &cfg).is_err());
            }
        }
        let input = InferenceInput {
            bank: &c.bank,
            labels: &labels,
            classifier: None,
            homographies: &test.homographies,
            static_h: &test.static_h,
        };
        let r = infer(&input, Solver::AlwaysStanding, &cfg).unwrap();
        assert!(r.sitting.iter().all(|s| !s));
        assert!(infer(&input, Solver::Paper, &cfg).is_err());
    }
}
