//! JSON and JSON Lines file formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterLabel, ClusterModel, ExemplarBank};
use crate::config::Intrinsics;
use crate::error::{Error, Result};
use crate::geometry::{Correspondences, Homography};
use crate::pathopt::{Energy, PosePath};
use crate::skeleton::{Frame, Pose, PoseSequence, NUM_JOINTS};
use crate::synth::{MotionScript, SynthOutput};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, 0, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, n + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| parse_err(path, 0, e))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Checks that record indices count up from zero without gaps.
fn check_indices(path: &Path, ts: impl Iterator<Item = usize>) -> Result<()> {
    for (n, t) in ts.enumerate() {
        if t != n {
            return Err(parse_err(path, n + 1, format!("expected t = {n}, found {t}")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    t: usize,
    frame: Frame,
    joints: Vec<[f64; 3]>,
}

pub fn read_poses(path: &Path) -> Result<PoseSequence> {
    let recs: Vec<PoseRecord> = read_jsonl(path)?;
    if let Some(n) = recs.windows(2).position(|w| w[1].t <= w[0].t) {
        return Err(parse_err(path, n + 2, "frame indices must be strictly increasing"));
    }
    let poses = recs
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            if r.joints.len() != NUM_JOINTS {
                return Err(parse_err(path, n + 1, format!("expected {NUM_JOINTS} joints, found {}", r.joints.len())));
            }
            Pose::new(std::array::from_fn(|j| Vector3::from(r.joints[j])), r.frame)
        })
        .collect::<Result<Vec<_>>>()?;
    PoseSequence::new(poses, PoseSequence::DEFAULT_RATE_HZ)
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    write_jsonl(
        path,
        poses.iter().enumerate().map(|(t, p)| PoseRecord {
            t,
            frame: p.frame(),
            joints: p.joints().iter().map(|v| [v.x, v.y, v.z]).collect(),
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct HomographyRecord {
    t: usize,
    h: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct CorrespondenceRecord {
    t: usize,
    src: Vec<[f64; 2]>,
    dst: Vec<[f64; 2]>,
}

pub fn write_homographies(path: &Path, hs: &[Homography]) -> Result<()> {
    write_jsonl(
        path,
        hs.iter().enumerate().map(|(t, h)| HomographyRecord { t, h: h.to_row_array() }),
    )
}

pub fn write_correspondences(path: &Path, cs: &[Correspondences]) -> Result<()> {
    let pts = |v: &[Point2<f64>]| v.iter().map(|p| [p.x, p.y]).collect();
    write_jsonl(
        path,
        cs.iter().enumerate().map(|(t, c)| CorrespondenceRecord {
            t,
            src: pts(&c.src),
            dst: pts(&c.dst),
        }),
    )
}

/// Frame-to-frame camera motion as stored on disk.
#[derive(Debug, Clone)]
pub enum Motion {
    Homographies(Vec<Homography>),
    Correspondences(Vec<Correspondences>),
}

impl Motion {
    /// Number of frames covered (one more than the number of frame pairs).
    pub fn frames(&self) -> usize {
        1 + match self {
            Motion::Homographies(h) => h.len(),
            Motion::Correspondences(c) => c.len(),
        }
    }

    pub fn homographies(&self) -> Result<Vec<Homography>> {
        match self {
            Motion::Homographies(h) => Ok(h.clone()),
            Motion::Correspondences(c) => c.iter().map(Correspondences::estimate).collect(),
        }
    }
}

fn from_values<T: DeserializeOwned>(path: &Path, values: Vec<serde_json::Value>) -> Result<Vec<T>> {
    values
        .into_iter()
        .enumerate()
        .map(|(n, v)| serde_json::from_value(v).map_err(|e| parse_err(path, n + 1, e)))
        .collect()
}

/// Reads a homography or correspondence file, telling them apart by the
/// keys of the first record.
pub fn read_motion(path: &Path) -> Result<Motion> {
    let values: Vec<serde_json::Value> = read_jsonl(path)?;
    let is_h = values.first().is_some_and(|v| v.get("h").is_some());
    if is_h {
        let recs: Vec<HomographyRecord> = from_values(path, values)?;
        check_indices(path, recs.iter().map(|r| r.t))?;
        let hs = recs
            .iter()
            .map(|r| Homography::from_row_slice(&r.h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Motion::Homographies(hs))
    } else {
        let recs: Vec<CorrespondenceRecord> = from_values(path, values)?;
        check_indices(path, recs.iter().map(|r| r.t))?;
        let pts = |v: &[[f64; 2]]| v.iter().map(|p| Point2::new(p[0], p[1])).collect();
        Ok(Motion::Correspondences(
            recs.iter()
                .map(|r| Correspondences {
                    src: pts(&r.src),
                    dst: pts(&r.dst),
                })
                .collect(),
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct StaticRecord {
    t: usize,
    h: f64,
}

pub fn read_static_h(path: &Path) -> Result<Vec<f64>> {
    let recs: Vec<StaticRecord> = read_jsonl(path)?;
    check_indices(path, recs.iter().map(|r| r.t))?;
    Ok(recs.into_iter().map(|r| r.h).collect())
}

pub fn write_static_h(path: &Path, h: &[f64]) -> Result<()> {
    write_jsonl(path, h.iter().enumerate().map(|(t, &h)| StaticRecord { t, h }))
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    t: usize,
    sitting: bool,
}

pub fn read_truth(path: &Path) -> Result<Vec<bool>> {
    let recs: Vec<TruthRecord> = read_jsonl(path)?;
    check_indices(path, recs.iter().map(|r| r.t))?;
    Ok(recs.into_iter().map(|r| r.sitting).collect())
}

pub fn write_truth(path: &Path, sitting: &[bool]) -> Result<()> {
    write_jsonl(path, sitting.iter().enumerate().map(|(t, &sitting)| TruthRecord { t, sitting }))
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    t: usize,
    exemplar: usize,
    cluster: usize,
}

pub fn write_path(path: &Path, indices: &[usize], bank: &ExemplarBank) -> Result<()> {
    write_jsonl(
        path,
        indices.iter().enumerate().map(|(t, &i)| PathRecord {
            t,
            exemplar: i,
            cluster: bank.cluster_of(i),
        }),
    )
}

/// Exemplar indices of a path file.
pub fn read_path(path: &Path) -> Result<Vec<usize>> {
    let recs: Vec<PathRecord> = read_jsonl(path)?;
    check_indices(path, recs.iter().map(|r| r.t))?;
    Ok(recs.into_iter().map(|r| r.exemplar).collect())
}

pub fn write_energy(path: &Path, p: &PosePath) -> Result<()> {
    write_json(path, &p.energy)
}

pub fn read_energy(path: &Path) -> Result<Energy> {
    read_json(path)
}

#[derive(Serialize, Deserialize)]
struct ClusterModelRecord {
    k: usize,
    centroids: Vec<Vec<f64>>,
    labels: Vec<ClusterLabel>,
}

pub fn write_cluster_model(path: &Path, m: &ClusterModel) -> Result<()> {
    let labels = m
        .labels()
        .ok_or(Error::InvalidParameter("cluster model has no sit/stand labels".into()))?;
    write_json(
        path,
        &ClusterModelRecord {
            k: m.k(),
            centroids: m.centroids().to_vec(),
            labels: labels.to_vec(),
        },
    )
}

pub fn read_cluster_model(path: &Path) -> Result<ClusterModel> {
    let rec: ClusterModelRecord = read_json(path)?;
    if rec.centroids.len() != rec.k {
        return Err(parse_err(path, 0, format!("k = {} but {} centroids", rec.k, rec.centroids.len())));
    }
    ClusterModel::new(rec.centroids, rec.labels)
}

#[derive(Serialize, Deserialize)]
struct BankRecord {
    /// Pose file, relative to the bank file's directory.
    poses: String,
    cluster_of: Vec<usize>,
    sequence_breaks: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

/// Writes the bank and its normalized poses to `poses_file` beside it.
pub fn write_bank(path: &Path, bank: &ExemplarBank, poses_file: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    write_poses(&dir.join(poses_file), bank.poses())?;
    write_json(
        path,
        &BankRecord {
            poses: poses_file.into(),
            cluster_of: bank.cluster_assignments().to_vec(),
            sequence_breaks: bank.sequence_breaks().to_vec(),
            neighbors: bank.neighbor_lists().to_vec(),
        },
    )
}

pub fn read_bank(path: &Path) -> Result<ExemplarBank> {
    let rec: BankRecord = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let poses = read_poses(&dir.join(&rec.poses))?.into_poses();
    ExemplarBank::from_parts(poses, rec.cluster_of, rec.sequence_breaks, rec.neighbors)
}

/// Index of the files written by [`write_synth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub frames: usize,
    pub rate_hz: f64,
    pub seed: u64,
    pub poses: String,
    pub homographies: String,
    pub correspondences: String,
    pub static_h: String,
    pub truth: String,
    pub intrinsics: Intrinsics,
    pub script: MotionScript,
}


pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_synth(dir: &Path, out: &SynthOutput, script: &MotionScript, intrinsics: &Intrinsics) -> Result<SynthManifest> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = SynthManifest {
        frames: out.poses.len(),
        rate_hz: out.poses.frame_rate_hz(),
        seed: script.seed,
        poses: "poses.jsonl".into(),
        homographies: "homographies.jsonl".into(),
        correspondences: "correspondences.jsonl".into(),
        static_h: "static_h.jsonl".into(),
        truth: "truth.jsonl".into(),
        intrinsics: *intrinsics,
        script: script.clone(),
    };
    write_poses(&dir.join(&m.poses), out.poses.poses())?;
    write_homographies(&dir.join(&m.homographies), &out.homographies)?;
    write_correspondences(&dir.join(&m.correspondences), &out.correspondences)?;
    write_static_h(&dir.join(&m.static_h), &out.static_h)?;
    write_truth(&dir.join(&m.truth), &out.sitting)?;
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    Ok(m)
}
