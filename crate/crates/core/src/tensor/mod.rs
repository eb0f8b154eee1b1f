//! Dense tensors and tape-based reverse-mode automatic differentiation.

mod array;
mod gradcheck;
mod scalar;
mod tape;

pub use array::Tensor;
pub use gradcheck::{grad_check, grad_check_many, relative_error, GradCheckReport, Probe};
pub use scalar::Scalar;
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: empty tensor")]
    Empty { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

impl TensorError {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Self::Invalid { op, msg: msg.into() }
    }
}
