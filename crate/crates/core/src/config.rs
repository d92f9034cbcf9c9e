//! Single JSON configuration shared by every pipeline stage.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::costs::CostParams;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::pathopt::PathParams;

/// What each per-frame homography contributes to a feature window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Top-left-normalized homography entries.
    #[default]
    Homography,
    /// Camera rotation `K⁻¹HK`, scaled by its top-left entry.
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            skew: 0.0,
        }
    }
}

impl Intrinsics {
    pub fn camera(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.skew)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub costs: CostParams,
    pub path: PathParams,
    /// Number of pose clusters.
    pub k: usize,
    /// Frames per feature window.
    pub window: usize,
    pub feature_mode: FeatureMode,
    pub intrinsics: Intrinsics,
    /// Ground normal of sensor-frame pose files.
    pub up: [f64; 3],
    pub kmeans_max_iters: usize,
    pub trees: usize,
    /// Neighbors voting in the k-NN classifier.
    pub knn_k: usize,
    pub seed: u64,
    /// Per-frame inference budget in seconds; slower frames are reported.
    pub frame_budget_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            costs: CostParams::default(),
            path: PathParams::default(),
            k: 300,
            window: 30,
            feature_mode: FeatureMode::Homography,
            intrinsics: Intrinsics::default(),
            up: [0.0, 0.0, 1.0],
            kmeans_max_iters: 100,
            trees: 100,
            knn_k: 10,
            seed: 0,
            frame_budget_s: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        self.path.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.window < 2 {
            return bad(format!("window must be at least 2, got {}", self.window));
        }
        if self.trees == 0 || self.knn_k == 0 {
            return bad("trees and knn_k must be positive".into());
        }
        if !(self.up.iter().all(|v| v.is_finite()) && self.up_vector().norm() > 0.0) {
            return bad("up vector must be finite and nonzero".into());
        }
        self.intrinsics.camera()?;
        Ok(())
    }

    pub fn up_vector(&self) -> Vector3<f64> {
        Vector3::from(self.up)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "config".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
