//! Reverse-mode differentiation over dense `f64` arrays.
//!
//! Build a [`Graph`] from named inputs and primitive ops, run
//! [`Graph::forward`] with bindings, then [`Graph::backward`] from a scalar
//! root to get `∂root/∂input` for every named input. [`grad_check`] and
//! [`check_inputs`] compare those gradients with central differences.

mod array;
mod gradcheck;
mod graph;

pub use array::Array;
pub use gradcheck::{check_inputs, grad_check, relative_error};
pub use graph::{normalize_rows, softmax_rows, Graph, Node, NodeId, Op, LOG_FLOOR, ZERO_ROW_JITTER};
