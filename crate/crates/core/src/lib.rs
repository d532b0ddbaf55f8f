//! FAU-enhanced audio-visual deepfake detection.
//!
//! The pipeline encodes a log-mel spectrogram and a video stream (with a
//! frozen facial-action-unit branch fused into the visual features), aligns
//! both modalities through a single set of learnable queries, pools them into
//! dense `T×T` temporal attention matrices, and classifies those with three
//! independent heads. Everything runs on the small autodiff engine in
//! [`tensor`].

pub mod audio;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod par;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
