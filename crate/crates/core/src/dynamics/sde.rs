//! Euler-Maruyama integration of overdamped Langevin dynamics
//! `dX = -∇V(X) dt + sqrt(2/β) dW`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DynamicsError, PotentialSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdeConfig {
    pub dt: f64,
    /// Inverse temperature. `f64::INFINITY` turns the noise off.
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Any coordinate exceeding this magnitude aborts the run.
    pub blowup_cap: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            beta: 1.0,
            n_steps: 100_000,
            burn_in: 1_000,
            seed: 0,
            blowup_cap: 1e6,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(DynamicsError::InvalidConfig("beta must be positive".into()));
        }
        if self.n_steps < self.burn_in + 2 {
            return Err(DynamicsError::InvalidConfig(
                "n_steps must exceed burn_in by at least 2 (trajectories need two points)".into(),
            ));
        }
        if !(self.blowup_cap > 0.0) {
            return Err(DynamicsError::InvalidConfig(
                "blowup_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Where a trajectory came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryOrigin {
    pub seed: u64,
    pub potential: String,
    pub transform: Option<String>,
}

/// Time-ordered points, stored row-major (`len × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub dt: f64,
    pub points: Vec<f64>,
    pub origin: TrajectoryOrigin,
}

impl Trajectory {
    pub fn new(
        dim: usize,
        dt: f64,
        points: Vec<f64>,
        origin: TrajectoryOrigin,
    ) -> Result<Self, DynamicsError> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(DynamicsError::InvalidConfig(
                "point buffer is not a multiple of dim".into(),
            ));
        }
        if points.len() / dim < 2 {
            return Err(DynamicsError::TooShort(points.len() / dim));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        Ok(Self {
            dim,
            dt,
            points,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Keep only the listed coordinates, in order.
    pub fn project(&self, coords: &[usize]) -> Trajectory {
        let mut points = Vec::with_capacity(self.len() * coords.len());
        for p in self.iter_points() {
            points.extend(coords.iter().map(|&c| p[c]));
        }
        Trajectory {
            dim: coords.len(),
            dt: self.dt,
            points,
            origin: self.origin.clone(),
        }
    }
}

/// Integrate from `x0`; the returned trajectory holds steps `burn_in..n_steps`.
pub fn euler_maruyama_simulate(
    spec: &PotentialSpec,
    cfg: &SdeConfig,
    x0: &[f64],
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    let dim = spec.dim();
    if x0.len() != dim {
        return Err(DynamicsError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    let noise_scale = (2.0 * cfg.dt / cfg.beta).sqrt();
    let mut rng = rng::stream(cfg.seed);
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut points = Vec::with_capacity((cfg.n_steps - cfg.burn_in) * dim);
    for k in 0..cfg.n_steps {
        if k >= cfg.burn_in {
            points.extend_from_slice(&x);
        }
        if k + 1 == cfg.n_steps {
            break;
        }
        spec.evaluate_into(&x, &mut grad).map_err(|e| match e {
            DynamicsError::NonFinite => DynamicsError::BlowUp { step: k },
            other => other,
        })?;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            let xi_noise = rng::normal(&mut rng);
            *xi += -gi * cfg.dt + noise_scale * xi_noise;
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > cfg.blowup_cap) {
            return Err(DynamicsError::BlowUp { step: k + 1 });
        }
    }
    Trajectory::new(
        dim,
        cfg.dt,
        points,
        TrajectoryOrigin {
            seed: cfg.seed,
            potential: spec.name(),
            transform: None,
        },
    )
}

/// Simulate one trajectory per initial condition; trajectory `i` uses seed
/// `cfg.seed + i`.
pub fn simulate_ensemble(
    spec: &PotentialSpec,
    cfg: &SdeConfig,
    initial: &[Vec<f64>],
) -> Result<Vec<Trajectory>, DynamicsError> {
    initial
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i as u64);
            euler_maruyama_simulate(spec, &c, x0)
        })
        .collect()
}

/// Initial conditions uniform on the unit ring in `(x1, x2)`, zero elsewhere.
pub fn ring_initial_conditions(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut r = rng::stream(seed);
    (0..n)
        .map(|_| {
            let th: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let mut x = vec![0.0; dim];
            x[0] = th.cos();
            if dim > 1 {
                x[1] = th.sin();
            }
            x
        })
        .collect()
}
