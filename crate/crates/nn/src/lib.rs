//! From-scratch differentiable kernels for the accident-impact models.
//!
//! Every layer ships a hand-derived backward pass; the test suite checks each
//! against central finite differences in 64-bit. No autodiff graph: the
//! architectures that use these kernels are fixed, so forward functions return
//! explicit caches that their matching backward functions consume.
//!
//! All computation is `f64`. Serialized weights are `f64` little-endian, and
//! the weight manifest records the dtype.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod fdcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod norm;
pub mod serialize;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{
    conv2d, conv2d_backward, maxpool, maxpool_backward, Conv2dCache, MaxPoolCache,
};
pub use dense::{dense, dense_backward, DenseCache};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use embedding::{embedding_lookup, embedding_lookup_backward};
pub use loss::{softmax, weighted_xent, weighted_xent_batch};
pub use lstm::{
    lstm_cell, lstm_cell_backward, lstm_backward_seq, lstm_forward_seq, readout,
    readout_backward, LstmCache, LstmGrads, LstmParams, LstmSeqCache,
};
pub use norm::{BatchNorm, BatchNormCache};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors surfaced by kernel construction and shape validation.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {context} expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("pooling window {window:?} does not divide extent {extent:?}")]
    PoolWindow {
        window: (usize, usize),
        extent: (usize, usize),
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
