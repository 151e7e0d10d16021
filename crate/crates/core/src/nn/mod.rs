//! A small CNN engine: the fixed layer set the screening models need, with
//! hand-written backward passes, fused sigmoid + binary cross-entropy, and Adam.
//!
//! Everything runs in f64 on single CHW samples; batches are loops over
//! samples with gradients summed in sample order, so results do not depend on
//! how work is scheduled.

mod adam;
mod checkpoint;
mod config;
mod gemm;
mod layers;
mod model;
mod tensor;

use std::path::PathBuf;

use thiserror::Error;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState, Moments};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
pub use config::{Activation, LayerShape, LayerSpec, ModelConfig, Preset};
pub use layers::{
    activate, bce_loss, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    dropout_backward, dropout_forward, maxpool_backward, maxpool_forward, sigmoid, ConvCache,
    DenseCache, PoolCache, BCE_CLIP,
};
pub use model::{build_model, image_tensor, Gradients, LayerParams, Mode, Model, ParamGrad};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("{path}: corrupt checkpoint: {reason}")]
    CheckpointCorrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
