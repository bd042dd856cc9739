use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape {shape:?} does not match data length {len}")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    #[error("incompatible shapes for {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} expects {expect} input(s), got {got}")]
    ArityMismatch {
        op: &'static str,
        expect: usize,
        got: usize,
    },

    #[error("log of non-positive value {value}")]
    LogNonPositive { value: f64 },

    #[error("operation {op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss node, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("empty input to {op}")]
    EmptyInput { op: &'static str },

    #[error("length mismatch in {op}: {lhs} vs {rhs}")]
    LengthMismatch {
        op: &'static str,
        lhs: usize,
        rhs: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular or nearly singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("non-finite loss at iteration {iteration} (last checkpoint at {last_checkpoint})")]
    TrainingDiverged {
        iteration: usize,
        last_checkpoint: usize,
    },

    #[error("non-finite loss for example {example_index}")]
    NonFiniteExample { example_index: usize },

    #[error("quadrature did not converge: achieved error bound {achieved:e} > {requested:e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
