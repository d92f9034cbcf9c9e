//! Per-joint error in centimetres and constant-pose baselines.

use std::fmt;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::classify::KnnModel;
use crate::clustering::{assign_cluster, ClusterLabel, ClusterModel, ExemplarBank};
use crate::error::{Error, Result};
use crate::skeleton::{Frame, Joint, Pose, PoseSequence, NUM_JOINTS};

/// Real shoulder width the normalized 0.2 corresponds to.
pub const REFERENCE_SHOULDER_CM: f64 = 30.0;
/// Centimetres per normalized unit (five reference shoulder widths).
pub const CM_PER_UNIT: f64 = 5.0 * REFERENCE_SHOULDER_CM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointGroup {
    Head,
    Elbows,
    Wrists,
    Knees,
    Ankles,
}

impl JointGroup {
    pub const ALL: [JointGroup; 5] = [
        JointGroup::Head,
        JointGroup::Elbows,
        JointGroup::Wrists,
        JointGroup::Knees,
        JointGroup::Ankles,
    ];

    pub fn joints(self) -> &'static [Joint] {
        match self {
            JointGroup::Head => &[Joint::Head],
            JointGroup::Elbows => &[Joint::ElbowLeft, Joint::ElbowRight],
            JointGroup::Wrists => &[Joint::WristLeft, Joint::WristRight],
            JointGroup::Knees => &[Joint::KneeLeft, Joint::KneeRight],
            JointGroup::Ankles => &[Joint::AnkleLeft, Joint::AnkleRight],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JointGroup::Head => "Head",
            JointGroup::Elbows => "Elbows",
            JointGroup::Wrists => "Wrists",
            JointGroup::Knees => "Knees",
            JointGroup::Ankles => "Ankles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: JointGroup,
    pub mean_cm: f64,
    pub std_err_cm: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub groups: Vec<GroupError>,
    /// Mean over all nine evaluated joints.
    pub overall_mean_cm: f64,
    pub frames: usize,
}

impl ErrorReport {
    pub fn group(&self, g: JointGroup) -> &GroupError {
        self.groups.iter().find(|e| e.group == g).expect("all groups reported")
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>10} {:>10} {:>8}", "joint", "mean(cm)", "se(cm)", "count")?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<8} {:>10.2} {:>10.2} {:>8}",
                g.group.name(),
                g.mean_cm,
                g.std_err_cm,
                g.count
            )?;
        }
        write!(f, "{:<8} {:>10.2} {:>10} {:>8}", "Avg", self.overall_mean_cm, "", self.frames)
    }
}

/// Moves `SpineBase` to the origin and yaws the pose so the shoulder line
/// lies in the yz plane, pointing along +y.
pub fn align_for_eval(p: &Pose) -> Result<Pose> {
    if p.frame() != Frame::WearerLocal {
        return Err(Error::FrameMismatch {
            expected: Frame::WearerLocal,
            actual: p.frame(),
        });
    }
    let across = p.joint(Joint::ShoulderRight) - p.joint(Joint::ShoulderLeft);
    let horizontal = (across.x * across.x + across.y * across.y).sqrt();
    if horizontal < 1e-9 {
        return Err(Error::DegeneratePose("shoulder line has no horizontal extent"));
    }
    // Rotate (x, y) of the shoulder vector onto (0, +|xy|).
    let angle = std::f64::consts::FRAC_PI_2 - across.y.atan2(across.x);
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
    let origin = p.joint(Joint::SpineBase);
    let mut aligned = p.map_joints(|j| rot * (j - origin))?;
    // Snap the residual so an aligned pose is an exact fixed point.
    let mut joints = *aligned.joints();
    joints[Joint::SpineBase.index()] = Vector3::zeros();
    aligned = Pose::new(joints, Frame::WearerLocal)?;
    Ok(aligned)
}

fn check_pair(pred: &PoseSequence, gt: &PoseSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "predicted sequence",
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyModel);
    }
    for s in [pred, gt] {
        if let Some(f) = s.frame().filter(|f| *f != Frame::WearerLocal) {
            return Err(Error::FrameMismatch {
                expected: Frame::WearerLocal,
                actual: f,
            });
        }
    }
    Ok(())
}

/// Per-frame, per-joint errors in centimetres after alignment, indexed by joint.
pub fn frame_errors(pred: &Pose, gt: &Pose) -> Result<[f64; NUM_JOINTS]> {
    let a = align_for_eval(pred)?;
    let b = align_for_eval(gt)?;
    Ok(std::array::from_fn(|j| {
        (a.joints()[j] - b.joints()[j]).norm() * CM_PER_UNIT
    }))
}

pub fn joint_errors(pred: &PoseSequence, gt: &PoseSequence) -> Result<ErrorReport> {
    check_pair(pred, gt)?;
    let per_frame = pred
        .poses()
        .iter()
        .zip(gt.poses())
        .map(|(p, g)| frame_errors(p, g))
        .collect::<Result<Vec<_>>>()?;
    let mut groups = Vec::new();
    let mut all = Vec::new();
    for g in JointGroup::ALL {
        let samples: Vec<f64> = per_frame
            .iter()
            .flat_map(|errs| g.joints().iter().map(|j| errs[j.index()]))
            .collect();
        all.extend_from_slice(&samples);
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count as f64;
        let std_err = if count > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            var.sqrt() / (count as f64).sqrt()
        } else {
            0.0
        };
        groups.push(GroupError {
            group: g,
            mean_cm: mean,
            std_err_cm: std_err,
            count,
        });
    }
    Ok(ErrorReport {
        groups,
        overall_mean_cm: all.iter().sum::<f64>() / all.len() as f64,
        frames: pred.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantMode {
    Standing,
    Sitting,
}

impl ConstantMode {
    fn label(self) -> ClusterLabel {
        match self {
            ConstantMode::Standing => ClusterLabel::StandingLike,
            ConstantMode::Sitting => ClusterLabel::SittingLike,
        }
    }
}

/// Coordinate-wise mean of the training poses whose cluster carries the
/// requested label.
pub fn baseline_constant(train: &[Pose], model: &ClusterModel, mode: ConstantMode) -> Result<Pose> {
    let labels = model
        .labels()
        .ok_or(Error::InvalidParameter("cluster model has no sit/stand labels".into()))?;
    let mut sum = [Vector3::zeros(); NUM_JOINTS];
    let mut count = 0usize;
    for p in train {
        if labels[assign_cluster(p, model)?] != mode.label() {
            continue;
        }
        for (s, j) in sum.iter_mut().zip(p.joints()) {
            *s += j;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyLabel(mode.label().name()));
    }
    Pose::new(sum.map(|s| s / count as f64), Frame::WearerLocal)
}

/// Same as [`baseline_constant`] over an exemplar bank, reusing its cluster
/// assignments.
pub fn baseline_constant_bank(bank: &ExemplarBank, labels: &[ClusterLabel], mode: ConstantMode) -> Result<Pose> {
    let mut sum = [Vector3::zeros(); NUM_JOINTS];
    let mut count = 0usize;
    for (i, p) in bank.poses().iter().enumerate() {
        if labels[bank.cluster_of(i)] != mode.label() {
            continue;
        }
        for (s, j) in sum.iter_mut().zip(p.joints()) {
            *s += j;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyLabel(mode.label().name()));
    }
    Pose::new(sum.map(|s| s / count as f64), Frame::WearerLocal)
}

/// Pose of the nearest training feature for each test feature.
pub fn baseline_kdtree(model: &KnnModel, bank: &ExemplarBank, test: &[Vec<f64>]) -> Result<Vec<Pose>> {
    if model.is_empty() {
        return Err(Error::EmptyModel);
    }
    test.iter()
        .map(|v| Ok(bank.pose(model.nearest_pose(v)?).clone()))
        .collect()
}
