//! Dense tensors with reverse-mode differentiation.
//!
//! Everything numeric in the tagger (network, CRF, optimizer) runs on these
//! types. Values are 64-bit; a [`Tape`] records operations for one backward pass.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use ops::{apply, logsumexp_slice, max_with_argmax, OpKind};
pub use tape::{concat, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} has a zero extent")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} invalid for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("slice {start}..{end} step {step} invalid for axis of length {len}")]
    InvalidSlice {
        start: usize,
        end: usize,
        step: usize,
        len: usize,
    },
    #[error("index {index} out of range for {bound} rows")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("{op} takes {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward needs a single-element output, got shape {shape:?}")]
    NonScalar { shape: Vec<usize> },
    #[error("tape was already differentiated")]
    AlreadyDifferentiated,
    #[error("non-finite value encountered")]
    NonFinite,
}
