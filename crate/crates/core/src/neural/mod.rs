//! Feed-forward networks, reverse-mode gradients and optimizers.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;
mod tape;

pub use adam::{AdamState, Optimizer, OptimizerConfig};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use mlp::{Activation, Mlp};
pub use tape::{Gradients, Matrix, ParamKey, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input width {got} does not match network input {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("concatenation of zero inputs")]
    EmptyConcat,
    #[error("loss node has shape {0:?}, expected a scalar")]
    NonScalarLoss((usize, usize)),
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),
    #[error("invalid layer sizes {0:?}")]
    BadArchitecture(Vec<usize>),
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
