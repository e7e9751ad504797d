//! Dense `f64` tensors and a define-by-run reverse-mode autodiff engine.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod rng;
mod tensor;

use thiserror::Error;

pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use graph::{concat_cols, stack_rows, Gradients, Graph, Var};
pub use rng::{RngState, RngStream, RNG_ALGORITHM};
pub use tensor::Tensor;

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("gradient probe failed: {0}")]
    Probe(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Self::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
