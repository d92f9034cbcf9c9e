//! 25-joint body poses, the wearer-local frame, and pose distance.
//!
//! A pose in the wearer-local frame has its origin at `SpineBase`, the third
//! axis along the ground normal, the second axis along the ground-projected
//! shoulder line (left to right), and the first axis completing the frame
//! (`axis2 × axis3`). Coordinates are divided by five shoulder lengths, so the
//! normalized shoulder distance is exactly 0.2.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 25;
/// Length of a flattened pose vector.
pub const POSE_DIM: usize = NUM_JOINTS * 3;
/// Shoulder distance of every wearer-local pose.
pub const NORMALIZED_SHOULDER: f64 = 0.2;

const MIN_SHOULDER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(usize)]
pub enum Joint {
    SpineBase,
    SpineMid,
    Neck,
    Head,
    ShoulderLeft,
    ElbowLeft,
    WristLeft,
    HandLeft,
    ShoulderRight,
    ElbowRight,
    WristRight,
    HandRight,
    HipLeft,
    KneeLeft,
    AnkleLeft,
    FootLeft,
    HipRight,
    KneeRight,
    AnkleRight,
    FootRight,
    SpineShoulder,
    HandTipLeft,
    ThumbLeft,
    HandTipRight,
    ThumbRight,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::SpineBase,
        Joint::SpineMid,
        Joint::Neck,
        Joint::Head,
        Joint::ShoulderLeft,
        Joint::ElbowLeft,
        Joint::WristLeft,
        Joint::HandLeft,
        Joint::ShoulderRight,
        Joint::ElbowRight,
        Joint::WristRight,
        Joint::HandRight,
        Joint::HipLeft,
        Joint::KneeLeft,
        Joint::AnkleLeft,
        Joint::FootLeft,
        Joint::HipRight,
        Joint::KneeRight,
        Joint::AnkleRight,
        Joint::FootRight,
        Joint::SpineShoulder,
        Joint::HandTipLeft,
        Joint::ThumbLeft,
        Joint::HandTipRight,
        Joint::ThumbRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Coordinate frame a pose is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Sensor,
    WearerLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    joints: [Vector3<f64>; NUM_JOINTS],
    frame: Frame,
}

impl Pose {
    pub fn new(joints: [Vector3<f64>; NUM_JOINTS], frame: Frame) -> Result<Self> {
        if joints.iter().any(|j| !j.iter().all(|c| c.is_finite())) {
            return Err(Error::DegeneratePose("non-finite joint coordinate"));
        }
        Ok(Self { joints, frame })
    }

    /// Builds a pose from a flattened joint-major vector of length 75.
    pub fn from_slice(values: &[f64], frame: Frame) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::DimMismatch {
                expected: POSE_DIM,
                actual: values.len(),
            });
        }
        let joints = std::array::from_fn(|j| {
            Vector3::new(values[3 * j], values[3 * j + 1], values[3 * j + 2])
        });
        Self::new(joints, frame)
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn joint(&self, joint: Joint) -> Vector3<f64> {
        self.joints[joint.index()]
    }

    pub fn joints(&self) -> &[Vector3<f64>; NUM_JOINTS] {
        &self.joints
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|j| j.iter().copied()).collect()
    }

    /// Applies `f` to every joint, keeping the frame tag.
    pub fn map_joints(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        Self::new(std::array::from_fn(|j| f(&self.joints[j])), self.frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    poses: Vec<Pose>,
    frame_rate_hz: f64,
}

impl PoseSequence {
    pub const DEFAULT_RATE_HZ: f64 = 30.0;

    pub fn new(poses: Vec<Pose>, frame_rate_hz: f64) -> Result<Self> {
        if !(frame_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        if let Some(first) = poses.first() {
            if let Some(bad) = poses.iter().find(|p| p.frame != first.frame) {
                return Err(Error::FrameMismatch {
                    expected: first.frame,
                    actual: bad.frame,
                });
            }
        }
        Ok(Self {
            poses,
            frame_rate_hz,
        })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn into_poses(self) -> Vec<Pose> {
        self.poses
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn frame(&self) -> Option<Frame> {
        self.poses.first().map(|p| p.frame)
    }
}

pub fn shoulder_length(p: &Pose) -> Result<f64> {
    let len = (p.joint(Joint::ShoulderRight) - p.joint(Joint::ShoulderLeft)).norm();
    if len < MIN_SHOULDER {
        return Err(Error::DegeneratePose("coincident shoulders"));
    }
    Ok(len)
}

/// Expresses a sensor-frame pose in the wearer-local frame.
///
/// `up` is the ground normal in sensor coordinates; it does not need to be
/// unit length.
pub fn normalize_pose(p: &Pose, up: &Vector3<f64>) -> Result<Pose> {
    let shoulder = shoulder_length(p)?;
    let up_norm = up.norm();
    if !(up_norm > 0.0) || !up_norm.is_finite() {
        return Err(Error::InvalidParameter("up vector must be nonzero".into()));
    }
    let axis3 = up / up_norm;
    let across = p.joint(Joint::ShoulderRight) - p.joint(Joint::ShoulderLeft);
    let ground = across - axis3 * across.dot(&axis3);
    if ground.norm() < MIN_SHOULDER.max(1e-9 * shoulder) {
        return Err(Error::DegeneratePose("shoulder line parallel to up"));
    }
    let axis2 = ground.normalize();
    let axis1 = axis2.cross(&axis3);
    let origin = p.joint(Joint::SpineBase);
    let scale = 1.0 / (5.0 * shoulder);
    let joints = std::array::from_fn(|j| {
        let rel = p.joints[j] - origin;
        Vector3::new(rel.dot(&axis1), rel.dot(&axis2), rel.dot(&axis3)) * scale
    });
    Pose::new(joints, Frame::WearerLocal)
}

/// Euclidean norm of the 75-dimensional difference of two wearer-local poses.
pub fn pose_distance(a: &Pose, b: &Pose) -> Result<f64> {
    for p in [a, b] {
        if p.frame != Frame::WearerLocal {
            return Err(Error::FrameMismatch {
                expected: Frame::WearerLocal,
                actual: p.frame,
            });
        }
    }
    Ok(a.joints
        .iter()
        .zip(&b.joints)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// Height of the hip midpoint above the mean ankle height, along the up axis
/// of a wearer-local pose (or of a flattened pose vector).
pub fn hip_height(values: &[f64]) -> f64 {
    let z = |j: Joint| values[3 * j.index() + 2];
    0.5 * (z(Joint::HipLeft) + z(Joint::HipRight)) - 0.5 * (z(Joint::AnkleLeft) + z(Joint::AnkleRight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, frame: Frame) -> Pose {
        let joints = std::array::from_fn(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        });
        Pose::new(joints, frame).unwrap()
    }

    fn canonical_pose() -> Pose {
        // Shoulders on the y axis, 0.3 m apart, SpineBase at the origin.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut joints: [Vector3<f64>; NUM_JOINTS] = std::array::from_fn(|_| {
            Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(0.0..1.7),
            )
        });
        joints[Joint::SpineBase.index()] = Vector3::zeros();
        joints[Joint::ShoulderLeft.index()] = Vector3::new(0.0, -0.15, 1.4);
        joints[Joint::ShoulderRight.index()] = Vector3::new(0.0, 0.15, 1.4);
        Pose::new(joints, Frame::Sensor).unwrap()
    }

    #[test]
    fn shoulder_length_direct() {
        let p = canonical_pose();
        assert!((shoulder_length(&p).unwrap() - 0.3).abs() < 1e-15);
        let n = normalize_pose(&p, &Vector3::z()).unwrap();
        assert!((shoulder_length(&n).unwrap() - NORMALIZED_SHOULDER).abs() < 1e-12);
    }

    #[test]
    fn coincident_shoulders_are_degenerate() {
        let mut joints = *canonical_pose().joints();
        joints[Joint::ShoulderRight.index()] = joints[Joint::ShoulderLeft.index()];
        let p = Pose::new(joints, Frame::Sensor).unwrap();
        assert!(matches!(shoulder_length(&p), Err(Error::DegeneratePose(_))));
        assert!(matches!(
            normalize_pose(&p, &Vector3::z()),
            Err(Error::DegeneratePose(_))
        ));
    }

    #[test]
    fn vertical_shoulder_line_is_degenerate() {
        let mut joints = *canonical_pose().joints();
        joints[Joint::ShoulderLeft.index()] = Vector3::new(0.1, 0.2, 1.2);
        joints[Joint::ShoulderRight.index()] = Vector3::new(0.1, 0.2, 1.5);
        let p = Pose::new(joints, Frame::Sensor).unwrap();
        assert!(matches!(
            normalize_pose(&p, &Vector3::z()),
            Err(Error::DegeneratePose(_))
        ));
    }

    #[test]
    fn canonical_pose_normalizes_by_pure_scale() {
        let p = canonical_pose();
        let n = normalize_pose(&p, &Vector3::z()).unwrap();
        assert_eq!(n.frame(), Frame::WearerLocal);
        for (a, b) in p.joints().iter().zip(n.joints()) {
            assert!((a / 1.5 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalization_undoes_yaw_and_translation() {
        let p = canonical_pose();
        let reference = normalize_pose(&p, &Vector3::z()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
            let shift = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let moved = p.map_joints(|j| rot * j + shift).unwrap();
            let n = normalize_pose(&moved, &Vector3::z()).unwrap();
            assert!(pose_distance(&n, &reference).unwrap() < 1e-9);
        }
    }

    #[test]
    fn normalization_handles_tilted_up() {
        // Same body seen from a tilted sensor: rotate everything, including up.
        let p = canonical_pose();
        let reference = normalize_pose(&p, &Vector3::z()).unwrap();
        let rot = Rotation3::from_euler_angles(0.4, -0.2, 1.1);
        let moved = p.map_joints(|j| rot * j).unwrap();
        let n = normalize_pose(&moved, &(rot * Vector3::z())).unwrap();
        assert!(pose_distance(&n, &reference).unwrap() < 1e-9);
    }

    #[test]
    fn distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_pose(&mut rng, Frame::WearerLocal);
        assert_eq!(pose_distance(&a, &a).unwrap(), 0.0);

        let mut joints = *a.joints();
        joints[Joint::Head.index()] += Vector3::new(0.3, 0.0, 0.4);
        let b = Pose::new(joints, Frame::WearerLocal).unwrap();
        assert!((pose_distance(&a, &b).unwrap() - 0.5).abs() < 1e-12);

        let s = random_pose(&mut rng, Frame::Sensor);
        assert!(matches!(
            pose_distance(&a, &s),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn distance_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_pose(&mut rng, Frame::WearerLocal);
            let b = random_pose(&mut rng, Frame::WearerLocal);
            let (va, vb) = (a.to_vec(), b.to_vec());
            let mut acc = 0.0;
            for k in 0..POSE_DIM {
                acc += (va[k] - vb[k]) * (va[k] - vb[k]);
            }
            assert!((pose_distance(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_joints_rejected() {
        let mut joints = *canonical_pose().joints();
        joints[3].x = f64::NAN;
        assert!(Pose::new(joints, Frame::Sensor).is_err());
    }

    #[test]
    fn sequence_requires_shared_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_pose(&mut rng, Frame::WearerLocal);
        let b = random_pose(&mut rng, Frame::Sensor);
        assert!(PoseSequence::new(vec![a.clone(), b], 30.0).is_err());
        assert!(PoseSequence::new(vec![a], 0.0).is_err());
    }
}
