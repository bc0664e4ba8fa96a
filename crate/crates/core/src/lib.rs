//! Core numerics for event-camera robustness experiments.
//!
//! * [`events`]: event streams, voxel grids and their text formats.
//! * [`dvs`]: the log-intensity triggering model, event simulation and
//!   Monte-Carlo estimators for false-positive and under-reporting rates.
//! * [`rps`]: survival maps and Bernoulli thinning of voxel grids.
//! * [`metrics`]: PSNR, SSIM and robustness curves.
//! * [`frames`]: PGM/PPM frame-sequence ingestion.

pub mod dvs;
pub mod events;
pub mod frames;
pub mod metrics;
pub mod rng;
pub mod rps;

mod error;

pub use error::{Error, Result};
