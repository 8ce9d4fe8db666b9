//! Reverse-mode automatic differentiation over small dense arrays.
//!
//! A [`Tape`] records every primitive application together with its inputs;
//! [`Tape::backward`] walks the record in reverse and accumulates adjoints.
//! Values live on the tape and are addressed through copyable [`Var`]
//! handles. Leaves are either variables (gradients are tracked) or
//! constants (they are not).
//!
//! Broadcasting is explicit: `broadcast_rows` / `broadcast_cols` are the
//! only primitives that change the number of elements by replication.

mod gradcheck;
mod real;
mod sparse;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{finite_difference_gradient, gradient_gap, relative_error};
pub use real::Real;
pub use sparse::Csr;
pub use tape::{Attrs, Gradients, Primitive, Tape, Var, NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{primitive}: incompatible shapes {shapes:?} ({detail})")]
    Shape {
        primitive: &'static str,
        shapes: Vec<Vec<usize>>,
        detail: String,
    },
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("{primitive}: missing attribute `{attr}`")]
    MissingAttribute {
        primitive: &'static str,
        attr: &'static str,
    },
    #[error("{primitive}: expected {expected} inputs, got {got}")]
    Arity {
        primitive: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("backward needs a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tensors of rank {} are not supported", .0.len())]
    Rank(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{primitive}: row index {index} out of range for {rows} rows")]
    IndexOutOfRange {
        primitive: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("objective is not finite at coordinate {0}")]
    NonFinite(usize),
}
