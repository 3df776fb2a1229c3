//! Tiny transformer with manual backpropagation, in double precision.
//!
//! Bidirectional or causal attention over padded batches, pre-norm residual
//! blocks, learned position and segment embeddings, per-task prompt tables,
//! Adam, a finite-difference gradient oracle, and a bit-exact checkpoint
//! format.

mod adam;
mod batch;
mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod params;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use batch::Batch;
pub use checkpoint::{load_params, save_params, CheckpointError};
pub use config::ModelConfig;
pub use forward::{backward, forward_eval, forward_hidden, forward_train, loss, loss_and_grads, softmax_rows};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{init_model, PromptSpec, Params};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input of length {len} exceeds max_len {max_len}")]
    OverLength { len: usize, max_len: usize },
    #[error("position id {position} exceeds the position table of {max_len} rows")]
    PositionOutOfRange { position: usize, max_len: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("example {index} is empty")]
    EmptyExample { index: usize },
    #[error("batch mixes bidirectional and causal examples")]
    MixedAttention,
    #[error("no position in the batch contributes to the loss")]
    NoLossPositions,
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
