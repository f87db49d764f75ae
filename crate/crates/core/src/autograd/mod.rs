//! Dense `f64` tensors with a reverse-mode tape and an Adam optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{Adam, AdamState};
pub(crate) use graph::softmax_in_place;
pub use graph::{Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutogradError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
}
