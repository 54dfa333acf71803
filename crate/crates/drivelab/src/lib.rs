//! drivelab: a desk-scale driving lab for modular steering policies.
//!
//! The crate trains a segmentation encoder-decoder on a built-in 2D driving
//! simulator, clones a pure-pursuit expert through its 64-value latent
//! bottleneck, and transfers the perception stage to unseen weather
//! conditions without new labels via teacher-student latent matching over
//! translated images.

pub mod error;
pub mod nn;
pub mod sim;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
