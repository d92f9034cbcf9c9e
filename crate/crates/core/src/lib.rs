//! Full-body pose inference for a chest-mounted camera from egomotion.

pub mod classify;
pub mod clustering;
pub mod config;
pub mod costs;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pathopt;
pub mod pipeline;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
