//! CPU differentiable Gaussian splatting with illumination-robust losses.

pub mod error;
pub mod harness;
pub mod illum;
pub mod imgcore;
pub mod normalcomp;
pub mod splat;
pub mod synth;
mod record;

pub use error::{Error, Result};
