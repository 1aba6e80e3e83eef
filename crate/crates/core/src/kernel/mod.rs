//! Deterministic forward/backward kernel for the bias-free 1D network.

mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use ops::ConvSpec;
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("tensor rank {rank} unsupported (1 to 3)")]
    Rank { rank: usize },
    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    DataLength { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("{what} expects a rank-{expected} tensor, got shape {shape:?}")]
    ExpectedRank { what: &'static str, expected: usize, shape: Vec<usize> },
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    ShapeMismatch { op: &'static str, dim: &'static str, expected: usize, actual: usize },
    #[error("{op}: shapes differ ({left:?} vs {right:?})")]
    ShapesDiffer { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("convolution spec field `{field}` must be at least 1")]
    InvalidSpec { field: &'static str },
    #[error("input of length {input_len} with padding {padding} is shorter than the kernel span {span}")]
    EmptyOutput { input_len: usize, span: usize, padding: usize },
    #[error("concat needs at least one part")]
    EmptyConcat,
    #[error("{op} on an empty tensor")]
    EmptyInput { op: &'static str },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("finite-difference epsilon {epsilon} outside [1e-6, 1e-4]")]
    InvalidEpsilon { epsilon: f64 },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
}
