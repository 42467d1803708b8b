//! Forensic toolkit for detecting AI-generated video and attributing it to a
//! source generator.
//!
//! The pipeline: a procedurally generated corpus of frames with known injected
//! traces ([`corpus`]), noise residuals and their Fourier fingerprints
//! ([`residual`]), a spectral patch detector trained with cross-entropy
//! ([`detector`]), video-level aggregation of patch embeddings ([`videolevel`]),
//! H.264-style re-compression ([`compression`]), ROC/AUC metrics ([`metrics`])
//! and experiment orchestration ([`harness`]).

pub mod compression;
pub mod corpus;
pub mod detector;
pub mod error;
pub mod frame;
pub mod harness;
pub mod metrics;
pub mod pgm;
pub mod residual;
pub mod seed;
pub mod spectral;
pub mod videolevel;

pub use error::{Error, Result};
pub use frame::{Frame, FrameSize, Patch, PATCH_SIZE};
