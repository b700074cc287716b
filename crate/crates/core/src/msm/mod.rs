//! Reference Markov state model: k-means microstates, count-based transition
//! matrices, PCCA+ memberships and RC cluster-separation statistics.

mod kmeans;
mod pcca;
mod separation;
mod transition;

pub use kmeans::{kmeans_discretize, Discretization};
pub use pcca::{pcca_plus, PccaResult};
pub use separation::{
    rc_cluster_separation, rc_cluster_separation_with_merge, ClusterStats, SeparationReport,
};
pub use transition::{count_transition_matrix, stationary_distribution, TransitionMatrix};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MsmError {
    #[error("need at least {k} points for {k} clusters, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("label sequence of length {len} is not longer than lag {lag}")]
    SequenceTooShort { len: usize, lag: usize },
    #[error("no state has outgoing transitions; unreachable states: {0:?}")]
    NoTransitions(Vec<usize>),
    #[error("dominant eigenvalue {index} has imaginary part {imag:e}; try a larger lag")]
    ComplexEigenvalues { index: usize, imag: f64 },
    #[error("eigenproblem is defective: {0}")]
    Defective(String),
}
