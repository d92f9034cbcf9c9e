//! Per-frame probability that the wearer is sitting, from a source other
//! than camera motion.

use crate::error::{Error, Result};

/// Probability that disables the static mismatch penalty for any τ > 0.5.
pub const NEUTRAL_SITTING_PROBABILITY: f64 = 0.5;

pub trait StaticProvider {
    /// Sitting probability `h_n` for each of `n_frames` frames.
    fn sitting_probabilities(&self, n_frames: usize) -> Result<Vec<f64>>;
}

/// The same probability for every frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantStatic(pub f64);

impl Default for ConstantStatic {
    fn default() -> Self {
        Self(NEUTRAL_SITTING_PROBABILITY)
    }
}

impl StaticProvider for ConstantStatic {
    fn sitting_probabilities(&self, n_frames: usize) -> Result<Vec<f64>> {
        check(self.0)?;
        Ok(vec![self.0; n_frames])
    }
}

/// Precomputed per-frame probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FileStatic {
    values: Vec<f64>,
}

impl FileStatic {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        values.iter().try_for_each(|&h| check(h))?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl StaticProvider for FileStatic {
    fn sitting_probabilities(&self, n_frames: usize) -> Result<Vec<f64>> {
        if self.values.len() != n_frames {
            return Err(Error::LengthMismatch {
                what: "static probabilities",
                expected: n_frames,
                actual: self.values.len(),
            });
        }
        Ok(self.values.clone())
    }
}

fn check(h: f64) -> Result<()> {
    if (0.0..=1.0).contains(&h) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sitting probability {h} outside [0, 1]")))
    }
}
