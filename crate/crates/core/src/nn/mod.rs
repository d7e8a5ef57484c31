//! Neural network layers with hand-written backward passes.
//!
//! Tensors are `f64`, row-major, laid out `[batch, channels, length]` for the
//! convolutional part and `[batch, features]` after flattening. Every layer's
//! `backward` accumulates into the parameter gradient buffers and returns the
//! gradient with respect to its input.

mod attention;
mod checkpoint;
mod conv;
mod dense;
mod model;
mod norm;
mod pool;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use attention::{ChannelAttention, ChannelAttentionCache, SpatialAttention, SpatialAttentionCache};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{Conv1d, Conv1dCache};
pub use dense::Dense;
pub use model::{AttentionCnn, ConvBlock, ModelConfig};
pub use norm::{BatchNorm1d, BatchNormCache, BN_EPS, BN_MOMENTUM};
pub use pool::{maxpool1d, maxpool1d_backward};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid layer state: {0}")]
    State(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type NnResult<T> = Result<T, NnError>;

/// Logistic function without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` values.
pub fn uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}
