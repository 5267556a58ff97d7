//! Minimal differentiation engine: dense and sparse matrices, a single-use
//! reverse-mode tape, Glorot initialization and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod init;
mod matrix;
mod sparse;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use init::{glorot_bound, glorot_init};
pub use matrix::{matmul, matmul_a_bt, matmul_at_b, Matrix};
pub use sparse::SparseMatrix;
pub use tape::{basis_spmm, sigmoid, Tape, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be 1x1, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("backward called on a consumed tape")]
    TapeConsumed,
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("{op} on an empty tensor")]
    Empty { op: &'static str },
}
