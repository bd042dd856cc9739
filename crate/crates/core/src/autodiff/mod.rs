//! Minimal reverse-mode automatic differentiation over dense `f64` arrays,
//! plus the Adam optimizer. Everything downstream differentiates through
//! this module.

mod adam;
mod check;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamOutcome, AdamState};
pub use check::finite_difference_check;
pub use graph::{Gradients, Graph, NodeId, Op};
pub use tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Numerically stable `ln(1 + e^x)`, shared with the gradient-free forward
/// path so both compute the same values.
pub fn softplus_scalar(x: f64) -> f64 {
    graph::softplus(x)
}
