//! Forward-pass building blocks for event/image feature fusion.
//!
//! [`tensor`] holds the dense kernels. [`mrm`] implements semantic-wise,
//! motion-wise and cross-modality attention; [`interact`] the motion
//! saliency and event semantic modules. [`weights`] reads and writes the
//! `MRMW1` weights container.

mod error;
pub mod interact;
pub mod mrm;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
