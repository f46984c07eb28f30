//! Deep binary reconstruction for cross-modal hashing.
//!
//! Two modality-specific encoders feed a shared hashing layer with an
//! adaptive tanh activation whose per-bit slope is learned, so activations
//! drift toward ±1 during training. Codes are packed into bit words and
//! ranked by Hamming distance. The [`mrbm`] module enumerates tiny
//! multimodal RBMs exactly to check the likelihood decomposition that
//! motivates the design.

pub mod atanh;
pub mod data;
mod error;
pub mod experiment;
pub mod model;
pub mod mrbm;
pub mod numerics;
pub mod par;
pub mod retrieval;

pub use error::{Error, Result};
