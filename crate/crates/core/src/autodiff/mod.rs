//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every model in this crate is written against [`Tape`]: the forward pass
//! records operations, [`Tape::backward`] walks the record in reverse and
//! returns a [`Gradients`] buffer. Message passing uses the segment
//! operations ([`Tape::segment_sum`], [`Tape::segment_softmax`]) so a layer
//! costs time linear in the number of edges.
//!
//! [`gradcheck`] compares analytic gradients with central finite
//! differences and is what keeps the hand-written backward rules honest.

mod gradcheck;
mod tape;

pub use gradcheck::{gradcheck, GradcheckReport, ParamCheck};
pub use tape::{Gradients, RowIndex, Tape, Var};

use thiserror::Error;

/// Dense row-major matrix used for every value on the tape.
pub type Tensor = ndarray::Array2<f64>;

/// Shared row index list (edge endpoints, segment ids, gather maps).
pub type Index = std::sync::Arc<Vec<usize>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("index {index} out of bounds ({len}) in {op}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("variable {0} was not recorded on this tape")]
    UnknownVar(usize),
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("empty input to {0}")]
    Empty(&'static str),
}

pub(crate) fn shape(t: &Tensor) -> (usize, usize) {
    (t.nrows(), t.ncols())
}
