//! Potentials, Langevin simulation, the Swiss-roll embedding and transition pairs.

mod pairs;
mod potential;
mod sde;
mod swiss_roll;

pub use pairs::{extract_pairs, extract_pairs_multi, Standardization, TransitionPairSet};
pub use potential::PotentialSpec;
pub use sde::{
    euler_maruyama_simulate, ring_initial_conditions, simulate_ensemble, SdeConfig, Trajectory,
    TrajectoryOrigin,
};
pub use swiss_roll::SwissRollMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("potential evaluated at its singular point (x1 = x2 = 0)")]
    SingularPoint,
    #[error("non-finite input")]
    NonFinite,
    #[error("trajectory blow-up at step {step}")]
    BlowUp { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory too short: {0} points")]
    TooShort(usize),
    #[error("lag {lag} is not shorter than trajectory length {len}")]
    LagTooLong { lag: usize, len: usize },
    #[error("point {0:?} lies outside the swiss-roll injectivity box")]
    OutsideBox(Vec<f64>),
    #[error("point {0:?} is not in the image of the swiss-roll map")]
    NotInImage(Vec<f64>),
    #[error("data has a constant coordinate; standardization is not invertible")]
    DegenerateData,
}
