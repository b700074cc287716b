//! Lag-τ transition pairs.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{DynamicsError, Trajectory};
use crate::rng;

/// Per-coordinate affine standardization `z = (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics over the rows of a row-major `n × dim` buffer.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = (rows.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_invertible(&self) -> bool {
        self.std.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.mean.iter().all(|m| m.is_finite())
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn invert(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..z.len() {
            out[i] = z[i] * self.std[i] + self.mean[i];
        }
    }

    /// Standardize every row of a row-major buffer.
    pub fn apply_rows(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; rows.len()];
        for (r, o) in rows.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply(r, o);
        }
        out
    }

    pub fn invert_rows(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; rows.len()];
        for (r, o) in rows.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.invert(r, o);
        }
        out
    }
}

/// The dataset `{(x_n, y_n)}` with `y_n` observed `lag_steps` after `x_n`.
///
/// Pairs are stored in physical units; the standardization is carried along
/// for consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPairSet {
    pub dim: usize,
    pub lag_steps: usize,
    /// Row-major `n × dim`.
    pub x: Vec<f64>,
    /// Row-major `n × dim`.
    pub y: Vec<f64>,
    pub normalization: Standardization,
}

impl TransitionPairSet {
    pub fn new(
        dim: usize,
        lag_steps: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        if lag_steps == 0 {
            return Err(DynamicsError::InvalidConfig(
                "lag_steps must be at least 1".into(),
            ));
        }
        if dim == 0 || x.len() != y.len() || x.is_empty() || !x.len().is_multiple_of(dim) {
            return Err(DynamicsError::InvalidConfig(
                "pair arrays must be nonempty, equally long, and a multiple of dim".into(),
            ));
        }
        let normalization = joint_standardization(&x, &y, dim);
        if !normalization.is_invertible() {
            return Err(DynamicsError::DegenerateData);
        }
        Ok(Self {
            dim,
            lag_steps,
            x,
            y,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_row(&self, n: usize) -> &[f64] {
        &self.x[n * self.dim..(n + 1) * self.dim]
    }

    pub fn y_row(&self, n: usize) -> &[f64] {
        &self.y[n * self.dim..(n + 1) * self.dim]
    }

    /// Rows in `indices`, keeping this set's standardization.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.dim;
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut y = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            x.extend_from_slice(self.x_row(i));
            y.extend_from_slice(self.y_row(i));
        }
        Self {
            dim: d,
            lag_steps: self.lag_steps,
            x,
            y,
            normalization: self.normalization.clone(),
        }
    }

    /// Uniform subsample without replacement, in original order. Statistics
    /// are recomputed over the retained pairs.
    pub fn subsample(&self, max_pairs: usize, seed: u64) -> Self {
        if self.len() <= max_pairs {
            return self.clone();
        }
        let mut r = rng::stream(seed);
        let mut idx = index::sample(&mut r, self.len(), max_pairs).into_vec();
        idx.sort_unstable();
        let mut out = self.select(&idx);
        out.normalization = joint_standardization(&out.x, &out.y, out.dim);
        out
    }
}

fn joint_standardization(x: &[f64], y: &[f64], dim: usize) -> Standardization {
    let mut all = Vec::with_capacity(x.len() + y.len());
    all.extend_from_slice(x);
    all.extend_from_slice(y);
    Standardization::fit(&all, dim)
}

/// Pairs `(x_k, x_{k+lag})` for every admissible `k` of one trajectory.
pub fn extract_pairs(
    traj: &Trajectory,
    lag_steps: usize,
) -> Result<TransitionPairSet, DynamicsError> {
    extract_pairs_multi(std::slice::from_ref(traj), lag_steps)
}

/// Concatenated pairs of several trajectories; no pair spans two trajectories.
pub fn extract_pairs_multi(
    trajs: &[Trajectory],
    lag_steps: usize,
) -> Result<TransitionPairSet, DynamicsError> {
    let Some(first) = trajs.first() else {
        return Err(DynamicsError::InvalidConfig("no trajectories".into()));
    };
    let dim = first.dim;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for t in trajs {
        if t.dim != dim {
            return Err(DynamicsError::DimensionMismatch {
                expected: dim,
                got: t.dim,
            });
        }
        if lag_steps >= t.len() {
            return Err(DynamicsError::LagTooLong {
                lag: lag_steps,
                len: t.len(),
            });
        }
        let n = t.len() - lag_steps;
        x.extend_from_slice(&t.points[..n * dim]);
        y.extend_from_slice(&t.points[lag_steps * dim..]);
    }
    TransitionPairSet::new(dim, lag_steps, x, y)
}
