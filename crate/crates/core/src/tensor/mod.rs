//! Dense `f64` tensors with reverse-mode differentiation, valid
//! convolutions, layer primitives, Adam, and a binary parameter file.

mod adam;
mod autograd;
mod conv;
mod graph;
mod nn;
mod params;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use autograd::{backward, Gradients, Tape};
pub use graph::Tensor;
pub use nn::{
    batch_norm, fully_connected, leaky_relu, relu, Activation, BnMode, RunningStats, BN_EPSILON, BN_MOMENTUM,
};
pub use params::{read_tensor_file, write_tensor_file, NamedArray, ParamSet, TENSOR_FILE_MAGIC, TENSOR_FILE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: axis {axis}: {detail}")]
    Axis {
        op: &'static str,
        axis: usize,
        detail: String,
    },
    #[error("{op}: expected rank {expected}, got {got}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("zero extent in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("expected a single-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("batch norm in train mode needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("duplicate parameter name {0}")]
    DuplicateName(String),
    #[error("unknown parameter {0}")]
    MissingName(String),
    #[error("tensor file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}
