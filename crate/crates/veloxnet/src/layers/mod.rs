//! Differentiable layer primitives with explicit forward and backward passes.
//!
//! Every layer owns its parameters, matching gradient buffers (accumulated by
//! `backward`, cleared by `zero_grads`), and a single-use forward cache:
//! `backward` consumes the cache of the most recent `forward` and fails with a
//! state error if none is present. A layer instance is exclusively owned
//! during forward/backward; there is no global state.

mod act;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use act::{gelu, gelu_grad, relu, ActKind, Activation};
pub use conv::Conv2d;
pub use linear::Linear;
pub use loss::{softmax, softmax_cross_entropy};
pub use norm::{BatchNorm2d, GroupAffineNorm, LayerNormTokens};
pub use pool::{pool_out_extent, GlobalAvgPool, MaxPool2d, Rounding};

use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Forward execution mode. Only batch normalization distinguishes the two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Normalization epsilon shared by every norm layer.
pub const NORM_EPS: f64 = 1e-5;

/// Running-statistics momentum for batch normalization.
pub const BN_MOMENTUM: f64 = 0.1;

/// Glorot/Xavier uniform init: U(±sqrt(6/(fan_in+fan_out))). Draws are made
/// in f64 so f32 and f64 layers consume the RNG stream identically.
pub(crate) fn glorot_uniform<T: Scalar, R: Rng>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-limit..limit)))
}

/// Flattens a rank-2 `(n, d)` or rank-3 `(batch, n, d)` token tensor into
/// `(rows, d)` view parameters. Token layers treat every leading row alike.
pub(crate) fn token_rows<T: Scalar>(x: &Tensor<T>) -> Option<(usize, usize)> {
    match x.shape() {
        [n, d] => Some((*n, *d)),
        [b, n, d] => Some((b * n, *d)),
        _ => None,
    }
}
