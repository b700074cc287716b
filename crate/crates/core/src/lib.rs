//! Learning and evaluating reaction coordinates of stochastic dynamics with
//! bottlenecked conditional flow matching.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`dynamics`] simulates overdamped Langevin trajectories and builds
//!   lag-τ transition pairs;
//! * [`neural`] is a small CPU network stack (MLPs, reverse-mode gradients,
//!   Adam);
//! * [`flowmatch`] trains the encoder and the forward/backward conditional
//!   velocity fields and samples from them;
//! * [`msm`] builds the reference Markov state model and PCCA+ clustering;
//! * [`diagnostics`] computes lumpability/decomposability residuals, reduced
//!   operators, Wasserstein distances and weak operator errors;
//! * [`format`] reads and writes the binary trajectory/pair files.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dynamics;
pub mod flowmatch;
pub mod format;
pub mod msm;
pub mod neural;
pub mod rng;
