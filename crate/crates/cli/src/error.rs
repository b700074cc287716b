use std::path::Path;

use fmrc_core::diagnostics::DiagError;
use fmrc_core::dynamics::DynamicsError;
use fmrc_core::flowmatch::FlowError;
use fmrc_core::format::FormatError;
use fmrc_core::msm::MsmError;
use thiserror::Error;

/// Exit code for usage, configuration and input/output problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for numerical failures (divergence, blow-up, bad spectra).
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration:\n{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BlowUp { .. } | DynamicsError::NonFinite => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NonFiniteLoss { .. }
            | FlowError::Diverged { .. }
            | FlowError::NonFiniteGradient { .. }
            | FlowError::NonFiniteState { .. } => CliError::Numerical(e.to_string()),
            FlowError::Dynamics(d) => d.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<MsmError> for CliError {
    fn from(e: MsmError) -> Self {
        match e {
            MsmError::ComplexEigenvalues { .. } | MsmError::Defective(_) => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<DiagError> for CliError {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::Flow(f) => f.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}
