//! Reverse-mode automatic differentiation over image-shaped tensors.
//!
//! All arithmetic is 64-bit. Out-of-range sampling clamps to the edge, and
//! the tape is deterministic: identical inputs produce bit-identical values
//! and gradients.

pub(crate) mod colorops;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport, TensorCheck};
pub use graph::{BinaryKind, Graph, GraphError, NodeId, ReduceKind, UnaryKind};
pub(crate) use graph::slice_lookup;
pub use tensor::{Shape, Tensor};
