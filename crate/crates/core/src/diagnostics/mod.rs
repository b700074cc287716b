//! Lumpability and decomposability residuals, reduced operators on finite
//! chains, empirical Wasserstein distances and the dictionary-restricted
//! weak operator error.

mod chain;
pub mod fixtures;
mod sweep;
mod w2;
mod weak;

pub use chain::{decomposability_residual, lumpability_residual, reduced_operators, DiscreteChain};
pub use sweep::{
    fmrc_vs_operator_error_sweep, model_diagnostics, write_sweep_csv, DiagnosticsConfig,
    ModelDiagnostics, SweepEntry, SweepRow,
};
pub use w2::{assignment, empirical_w2, w2_squared_1d, W2Mode};
pub use weak::{
    build_dictionary, pairing_error, weak_error_with_dictionaries, weak_operator_error, GridSpec,
    OperatorErrorReport, PairContribution, TestFunction, WeakErrorConfig,
};

use thiserror::Error;

use crate::flowmatch::FlowError;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("state {0} is visited but has zero mass after one step")]
    ZeroForwardMass(usize),
    #[error("block {0} has zero mass")]
    EmptyBlock(usize),
    #[error("exact W2 needs equal sample counts, got {0} and {1}")]
    UnequalSizes(usize, usize),
    #[error("exact W2 is limited to {max} samples, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("sweep losses must strictly decrease; row {0} does not")]
    UnsortedSweep(usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
