//! Transformer-encoder inference with attention-guided token pruning,
//! exact FLOP accounting, and an experiment harness.
//!
//! Kernels and the encoder are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the inference default of `f32`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encoder;
pub mod error;
pub mod flops;
pub mod harness;
pub mod numerics;
pub mod pruning;
pub mod scalar;

pub use error::{Error, Result};
pub use flops::ModelDims;
pub use numerics::{Block, FlopLedger, MemoryMeter};
pub use pruning::{PruneConfig, Schedule};
pub use scalar::Scalar;

/// Single-precision matrix used for inference.
pub type Matrix = numerics::DenseMatrix<f32>;
/// Double-precision matrix, used as a reference in tests.
pub type Matrix64 = numerics::DenseMatrix<f64>;
pub type Weights = encoder::EncoderWeights<f32>;
pub type Weights64 = encoder::EncoderWeights<f64>;
pub type LayerOutput = encoder::LayerOutput<f32>;
pub type EncoderOutput = encoder::EncoderOutput<f32>;
