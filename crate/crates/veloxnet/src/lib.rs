//! VeloxNet: a lightweight image classifier built from gMLP blocks with
//! spatial gating, next to a reference SqueezeNet, with exact parameter/MAC
//! accounting, bit-stable file formats, and a CPU training/evaluation
//! harness.
//!
//! Everything runs on plain dense tensors (f32 for work, f64 for gradient
//! checking); every layer carries a hand-written backward pass that is
//! verified against central finite differences ([`gradcheck`]).
//!
//! Module map:
//! - [`tensor`]: dense row-major tensors and the primitive numeric ops
//! - [`layers`]: conv / norms / linear / activations / pooling / loss, each
//!   with explicit forward and backward
//! - [`gmlp`]: the Spatial Gating Unit and the residual gMLP block
//! - [`fire`]: the squeeze/expand fire module
//! - [`models`]: declarative graphs for both architectures plus the executor
//! - [`accounting`]: per-layer parameter/MAC/storage reports
//! - [`data`]: tensor/checkpoint containers, manifests, augmentation,
//!   batching, synthetic data
//! - [`train`]: Adam, the fit loop, weighted metrics, throughput benchmark

pub mod accounting;
pub mod data;
pub mod error;
pub mod fire;
pub mod gmlp;
pub mod gradcheck;
pub mod layers;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Dtype, Scalar, Tensor};
