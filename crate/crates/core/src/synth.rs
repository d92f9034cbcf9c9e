//! Scripted stick-figure motion with a chest-mounted camera.
//!
//! Bodies are built in metres in a z-up world frame. The body faces +x with
//! its left side at -y, so a zero-yaw pose normalizes by pure scaling.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Point2, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Correspondences, Homography};
use crate::skeleton::{Frame, Joint, Pose, PoseSequence, NUM_JOINTS};

/// Keyframe constants of the template figure, in metres and radians.
pub mod template {
    /// Hip joint height when standing.
    pub const STAND_HIP: f64 = 0.98;
    /// Hip joint height when seated.
    pub const SIT_HIP: f64 = 0.53;
    /// Backward hip travel from standing to seated.
    pub const SIT_BACK: f64 = 0.45;
    pub const ANKLE_Z: f64 = 0.08;
    pub const THIGH: f64 = 0.45;
    pub const SHIN: f64 = 0.45;
    pub const HIP_HALF_WIDTH: f64 = 0.09;
    /// SpineBase sits this far above the hip joints.
    pub const PELVIS_ABOVE_HIP: f64 = 0.03;
    pub const SPINE_MID: f64 = 0.25;
    pub const SPINE_SHOULDER: f64 = 0.50;
    pub const NECK: f64 = 0.56;
    pub const HEAD: f64 = 0.70;
    pub const SHOULDER_HALF_WIDTH: f64 = 0.18;
    pub const SHOULDER_DROP: f64 = 0.03;
    pub const UPPER_ARM: f64 = 0.28;
    pub const FOREARM: f64 = 0.25;
    pub const HAND: f64 = 0.08;
    pub const HAND_TIP: f64 = 0.16;
    pub const THUMB: f64 = 0.06;
    pub const THUMB_IN: f64 = 0.04;
    pub const FOOT_FORWARD: f64 = 0.12;
    pub const FOOT_DROP: f64 = 0.06;
    pub const STAND_LEAN: f64 = 0.03;
    pub const SIT_LEAN: f64 = 0.25;
    pub const STAND_ELBOW: f64 = 0.15;
    pub const SIT_ELBOW: f64 = 1.2;
    pub const SIT_ARM: f64 = 0.35;
    pub const ARM_SWING: f64 = 0.35;
    pub const THIGH_SWING: f64 = 0.4;
    pub const KNEE_FLEX: f64 = 0.6;
    /// Gait amplitude while turning on the spot.
    pub const TURN_GAIT: f64 = 0.4;
    pub const TURN_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
    pub const GAIT_HZ: f64 = 1.0;
    pub const CAMERA_SWAY: f64 = 0.03;
    pub const CAMERA_BOB: f64 = 0.015;
}

use template as t;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    StandIdle,
    SitIdle,
    SitDown,
    StandUp,
    Walk,
    TurnLeft,
    TurnRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stance {
    Standing,
    Sitting,
}

impl Primitive {
    fn name(self) -> &'static str {
        match self {
            Primitive::StandIdle => "stand_idle",
            Primitive::SitIdle => "sit_idle",
            Primitive::SitDown => "sit_down",
            Primitive::StandUp => "stand_up",
            Primitive::Walk => "walk",
            Primitive::TurnLeft => "turn_left",
            Primitive::TurnRight => "turn_right",
        }
    }

    /// Stance before and after the primitive.
    fn stances(self) -> (Stance, Stance) {
        match self {
            Primitive::SitIdle => (Stance::Sitting, Stance::Sitting),
            Primitive::SitDown => (Stance::Standing, Stance::Sitting),
            Primitive::StandUp => (Stance::Sitting, Stance::Standing),
            _ => (Stance::Standing, Stance::Standing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub primitive: Primitive,
    pub frames: usize,
}

fn default_confidence() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionScript {
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub seed: u64,
    /// Gaussian σ added to every joint coordinate, metres.
    #[serde(default)]
    pub joint_jitter: f64,
    /// Gaussian σ added to destination correspondences, pixels.
    #[serde(default)]
    pub pixel_noise: f64,
    /// Static sitting probability emitted while seated; standing emits its
    /// complement.
    #[serde(default = "default_confidence")]
    pub static_confidence: f64,
}

impl MotionScript {
    pub fn new(segments: Vec<Segment>, seed: u64) -> Self {
        Self {
            segments,
            seed,
            joint_jitter: 0.0,
            pixel_noise: 0.0,
            static_confidence: default_confidence(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Script("script has no segments".into()));
        }
        if !(self.joint_jitter >= 0.0 && self.pixel_noise >= 0.0) {
            return Err(Error::Script("noise levels must be non-negative".into()));
        }
        if !(0.5..=1.0).contains(&self.static_confidence) {
            return Err(Error::Script(format!(
                "static confidence {} outside [0.5, 1]",
                self.static_confidence
            )));
        }
        let mut stance = self.segments[0].primitive.stances().0;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.frames == 0 {
                return Err(Error::Script(format!("segment {i} has zero duration")));
            }
            let (before, after) = seg.primitive.stances();
            if before != stance {
                return Err(Error::Script(format!(
                    "segment {i} ({}) cannot follow a {} stance",
                    seg.primitive.name(),
                    if stance == Stance::Sitting { "sitting" } else { "standing" }
                )));
            }
            stance = after;
        }
        Ok(())
    }

    /// A random valid script of at least `min_frames` frames mixing every
    /// primitive.
    pub fn random(min_frames: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut segments = Vec::new();
        let mut stance = Stance::Standing;
        let mut total = 0;
        while total < min_frames {
            let (primitive, lo, hi) = match stance {
                Stance::Standing => match rng.random_range(0..6) {
                    0 => (Primitive::StandIdle, 30, 90),
                    1 | 2 => (Primitive::Walk, 60, 150),
                    3 => (Primitive::TurnLeft, 30, 60),
                    4 => (Primitive::TurnRight, 30, 60),
                    _ => (Primitive::SitDown, 30, 45),
                },
                Stance::Sitting => match rng.random_range(0..3) {
                    0 | 1 => (Primitive::SitIdle, 60, 150),
                    _ => (Primitive::StandUp, 30, 45),
                },
            };
            let frames = rng.random_range(lo..=hi);
            stance = primitive.stances().1;
            segments.push(Segment { primitive, frames });
            total += frames;
        }
        Self::new(segments, seed)
    }
}

/// Body configuration for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Posture {
    /// 0 standing, 1 seated.
    sit: f64,
    /// Gait amplitude in [0, 1].
    gait: f64,
    phase: f64,
    yaw: f64,
}

impl Posture {
    fn lean(&self) -> f64 {
        lerp(t::STAND_LEAN, t::SIT_LEAN, self.sit)
    }

    fn sway(&self) -> f64 {
        self.gait * t::CAMERA_SWAY * self.phase.sin()
    }

    fn camera_pitch(&self) -> f64 {
        self.lean() + self.gait * t::CAMERA_BOB * (2.0 * self.phase).sin()
    }

    fn camera_yaw(&self) -> f64 {
        self.yaw + self.sway()
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

/// Direction of a limb hanging at `angle` from straight down, forward positive.
fn limb(angle: f64) -> Vector3<f64> {
    Vector3::new(angle.sin(), 0.0, -angle.cos())
}

/// Knee position for a two-link leg whose knee bends forward.
fn knee_ik(hip: Vector3<f64>, ankle: Vector3<f64>) -> Vector3<f64> {
    let d = ankle - hip;
    let reach = d.norm();
    let len = t::THIGH.min(t::SHIN);
    let half = (0.5 * reach).min(len);
    let offset = (len * len - half * half).max(0.0).sqrt();
    let perp = Vector3::new(-d.z, 0.0, d.x) / reach;
    hip + 0.5 * d + offset * perp
}

fn body_joints(p: &Posture) -> [Vector3<f64>; NUM_JOINTS] {
    let mut j = [Vector3::zeros(); NUM_JOINTS];
    let mut set = |joint: Joint, v: Vector3<f64>| j[joint.index()] = v;

    let hip_z = lerp(t::STAND_HIP, t::SIT_HIP, p.sit);
    let hip_x = -t::SIT_BACK * p.sit;
    let pelvis = Vector3::new(hip_x, 0.0, hip_z + t::PELVIS_ABOVE_HIP);
    let lean = p.lean();
    let up = Vector3::new(lean.sin(), 0.0, lean.cos());
    let spine_shoulder = pelvis + t::SPINE_SHOULDER * up;
    set(Joint::SpineBase, pelvis);
    set(Joint::SpineMid, pelvis + t::SPINE_MID * up);
    set(Joint::SpineShoulder, spine_shoulder);
    set(Joint::Neck, pelvis + t::NECK * up);
    set(Joint::Head, pelvis + t::HEAD * up);

    let sides = [
        (-1.0, p.phase, [
            Joint::HipLeft,
            Joint::KneeLeft,
            Joint::AnkleLeft,
            Joint::FootLeft,
            Joint::ShoulderLeft,
            Joint::ElbowLeft,
            Joint::WristLeft,
            Joint::HandLeft,
            Joint::HandTipLeft,
            Joint::ThumbLeft,
        ]),
        (1.0, p.phase + PI, [
            Joint::HipRight,
            Joint::KneeRight,
            Joint::AnkleRight,
            Joint::FootRight,
            Joint::ShoulderRight,
            Joint::ElbowRight,
            Joint::WristRight,
            Joint::HandRight,
            Joint::HandTipRight,
            Joint::ThumbRight,
        ]),
    ];
    for (side, phase, [hip_j, knee_j, ankle_j, foot_j, sh_j, el_j, wr_j, hand_j, tip_j, thumb_j]) in sides {
        let hip = Vector3::new(hip_x, side * t::HIP_HALF_WIDTH, hip_z);
        let (knee, ankle) = if p.sit > 0.0 {
            let ankle = Vector3::new(0.0, side * t::HIP_HALF_WIDTH, t::ANKLE_Z);
            (knee_ik(hip, ankle), ankle)
        } else {
            let thigh = p.gait * t::THIGH_SWING * phase.sin();
            let flex = p.gait * t::KNEE_FLEX * phase.cos().max(0.0);
            let knee = hip + t::THIGH * limb(thigh);
            (knee, knee + t::SHIN * limb(thigh - flex))
        };
        set(hip_j, hip);
        set(knee_j, knee);
        set(ankle_j, ankle);
        set(foot_j, ankle + Vector3::new(t::FOOT_FORWARD, 0.0, -t::FOOT_DROP));

        let shoulder = spine_shoulder + Vector3::new(0.0, side * t::SHOULDER_HALF_WIDTH, 0.0) - t::SHOULDER_DROP * up;
        let arm = t::SIT_ARM * p.sit - p.gait * t::ARM_SWING * phase.sin();
        let fore = limb(arm + lerp(t::STAND_ELBOW, t::SIT_ELBOW, p.sit));
        let elbow = shoulder + t::UPPER_ARM * limb(arm);
        let wrist = elbow + t::FOREARM * fore;
        set(sh_j, shoulder);
        set(el_j, elbow);
        set(wr_j, wrist);
        set(hand_j, wrist + t::HAND * fore);
        set(tip_j, wrist + t::HAND_TIP * fore);
        set(thumb_j, wrist + t::THUMB * fore - Vector3::new(0.0, side * t::THUMB_IN, 0.0));
    }

    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), p.yaw + p.sway());
    j.map(|v| rot * v)
}

/// Camera-to-world rotation of the chest camera. The camera looks along its
/// +z axis with +y pointing down in the image.
fn camera_orientation(p: &Posture) -> Matrix3<f64> {
    // Camera axes expressed in the body frame at zero yaw and pitch.
    let mount = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), p.camera_yaw());
    let pitch = Rotation3::from_axis_angle(&Vector3::y_axis(), p.camera_pitch());
    yaw.matrix() * pitch.matrix() * mount
}

fn postures(script: &MotionScript) -> Vec<Posture> {
    let mut out = Vec::with_capacity(script.total_frames());
    let mut phase = 0.0;
    let mut yaw = 0.0;
    let step = TAU * t::GAIT_HZ / PoseSequence::DEFAULT_RATE_HZ;
    for seg in &script.segments {
        let d = seg.frames as f64;
        for k in 0..seg.frames {
            let f = (k + 1) as f64 / d;
            let (sit, gait) = match seg.primitive {
                Primitive::StandIdle => (0.0, 0.0),
                Primitive::SitIdle => (1.0, 0.0),
                Primitive::SitDown => (f, 0.0),
                Primitive::StandUp => (1.0 - f, 0.0),
                Primitive::Walk => (0.0, 1.0),
                Primitive::TurnLeft | Primitive::TurnRight => (0.0, t::TURN_GAIT),
            };
            match seg.primitive {
                Primitive::TurnLeft => yaw += t::TURN_ANGLE / d,
                Primitive::TurnRight => yaw -= t::TURN_ANGLE / d,
                _ => {}
            }
            if gait > 0.0 {
                phase = (phase + step) % TAU;
            }
            out.push(Posture { sit, gait, phase, yaw });
        }
    }
    out
}

pub const POINTS_PER_FRAME: usize = 50;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Ground-truth poses in the z-up world frame.
    pub poses: PoseSequence,
    /// `homographies[n]` maps frame `n` to frame `n + 1`.
    pub homographies: Vec<Homography>,
    pub correspondences: Vec<Correspondences>,
    pub static_h: Vec<f64>,
    /// Ground-truth stance: true while more than half seated.
    pub sitting: Vec<bool>,
    pub camera_pitch: Vec<f64>,
    pub camera_yaw: Vec<f64>,
}

/// World up direction of generated poses.
pub fn world_up() -> Vector3<f64> {
    Vector3::z()
}

pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.0).expect("valid default intrinsics")
}

pub fn generate(script: &MotionScript, camera: &CameraIntrinsics) -> Result<SynthOutput> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let jitter = Normal::new(0.0, script.joint_jitter).map_err(|e| Error::Script(e.to_string()))?;
    let pixel = Normal::new(0.0, script.pixel_noise).map_err(|e| Error::Script(e.to_string()))?;
    let ps = postures(script);

    let mut poses = Vec::with_capacity(ps.len());
    for p in &ps {
        let joints = body_joints(p).map(|v| {
            if script.joint_jitter > 0.0 {
                v + Vector3::from_fn(|_, _| jitter.sample(&mut rng))
            } else {
                v
            }
        });
        poses.push(Pose::new(joints, Frame::Sensor)?);
    }

    let cams: Vec<Matrix3<f64>> = ps.iter().map(camera_orientation).collect();
    let (w, h) = (2.0 * camera.matrix()[(0, 2)], 2.0 * camera.matrix()[(1, 2)]);
    let mut homographies = Vec::with_capacity(ps.len().saturating_sub(1));
    let mut correspondences = Vec::with_capacity(ps.len().saturating_sub(1));
    for pair in cams.windows(2) {
        let rel = pair[1].transpose() * pair[0];
        let hom = Homography::normalize(&(camera.matrix() * rel * camera.inverse()))?;
        let mut src = Vec::with_capacity(POINTS_PER_FRAME);
        let mut dst = Vec::with_capacity(POINTS_PER_FRAME);
        for _ in 0..POINTS_PER_FRAME {
            let p = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let mut q = hom.apply(&p);
            if script.pixel_noise > 0.0 {
                q.x += pixel.sample(&mut rng);
                q.y += pixel.sample(&mut rng);
            }
            src.push(p);
            dst.push(q);
        }
        homographies.push(hom);
        correspondences.push(Correspondences { src, dst });
    }

    let c = script.static_confidence;
    Ok(SynthOutput {
        poses: PoseSequence::new(poses, PoseSequence::DEFAULT_RATE_HZ)?,
        homographies,
        correspondences,
        static_h: ps.iter().map(|p| lerp(1.0 - c, c, p.sit)).collect(),
        sitting: ps.iter().map(|p| p.sit > 0.5).collect(),
        camera_pitch: ps.iter().map(Posture::camera_pitch).collect(),
        camera_yaw: ps.iter().map(Posture::camera_yaw).collect(),
    })
}
