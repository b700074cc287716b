//! Rectified flow matching: the linear interpolant, the conditional losses
//! with and without an RC bottleneck, training, and ODE sampling.

mod interpolant;
mod loss;
mod models;
mod sampler;
mod train;

pub use interpolant::{fourier_features, interpolate, interpolate_rows, Interpolant};
pub use loss::{
    evaluate_loss, fmrc_minibatch_loss, full_fm_minibatch_loss, record_pair_loss, Conditioning,
    FmrcLossReport, LossGraph, LossNoise, SSampling, ENCODER_ID, V0_ID, V1_ID,
};
pub use models::{Direction, EncoderModel, FlowModels, ModelManifest, VelocityFieldModel};
pub use sampler::{integrate, sample_flow, sample_flow_batch, OdeMethod, OdeSolverConfig};
pub use train::{
    train, train_marginal_flow, write_history_csv, ArchitectureConfig, LossRecord, TrainConfig,
    TrainMode, TrainOutcome,
};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("interpolation time {0} outside [0, 1]")]
    InvalidTime(f64),
    #[error("{what}: expected width {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rc dimension {rc_dim} must be smaller than state dimension {dim}")]
    BadBottleneck { rc_dim: usize, dim: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss (l0 = {l0}, l1 = {l1}, batch size {batch_size})")]
    NonFiniteLoss { l0: f64, l1: f64, batch_size: usize },
    #[error("training diverged: {consecutive} consecutive non-finite batches ending at iteration {iteration} (l0 = {l0}, l1 = {l1})")]
    Diverged {
        iteration: usize,
        consecutive: usize,
        l0: f64,
        l1: f64,
    },
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}
