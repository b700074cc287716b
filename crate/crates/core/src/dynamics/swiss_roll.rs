//! Swiss-roll embedding of 3-D points.
//!
//! With `t = a + b·x1` and `ρ = t + γ·x3` the map sends `x` to
//! `(ρ cos t, x2, ρ sin t)`. It is injective on the box
//! `|x1| ≤ x1_limit, |x3| ≤ x3_limit` whenever the angular range
//! `2·b·x1_limit` is below one full turn and `ρ` stays positive.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use super::{DynamicsError, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwissRollMap {
    pub angle_offset: f64,
    pub angle_scale: f64,
    pub thickness_scale: f64,
    pub x1_limit: f64,
    pub x3_limit: f64,
}

impl Default for SwissRollMap {
    fn default() -> Self {
        Self {
            angle_offset: 1.5 * PI,
            angle_scale: 3.0 * PI / 8.0,
            thickness_scale: 1.0,
            x1_limit: 2.2,
            x3_limit: 2.0,
        }
    }
}

impl SwissRollMap {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let span = 2.0 * self.angle_scale.abs() * self.x1_limit;
        if !(self.angle_scale != 0.0
            && self.thickness_scale > 0.0
            && self.x1_limit > 0.0
            && self.x3_limit >= 0.0)
        {
            return Err(DynamicsError::InvalidConfig(
                "swiss roll scales and limits must be positive".into(),
            ));
        }
        if span >= TAU {
            return Err(DynamicsError::InvalidConfig(format!(
                "swiss roll angular span {span:.4} is not below 2π; the map is not injective"
            )));
        }
        if self.min_radius() <= 0.0 {
            return Err(DynamicsError::InvalidConfig(
                "swiss roll radius reaches zero inside the declared box".into(),
            ));
        }
        Ok(())
    }

    fn t_range(&self) -> (f64, f64) {
        let a = self.angle_offset - self.angle_scale.abs() * self.x1_limit;
        let b = self.angle_offset + self.angle_scale.abs() * self.x1_limit;
        (a, b)
    }

    fn min_radius(&self) -> f64 {
        self.t_range().0 - self.thickness_scale * self.x3_limit
    }

    pub fn forward(&self, x: &[f64]) -> Result<[f64; 3], DynamicsError> {
        if x.len() != 3 {
            return Err(DynamicsError::DimensionMismatch {
                expected: 3,
                got: x.len(),
            });
        }
        if x[0].abs() > self.x1_limit || x[2].abs() > self.x3_limit {
            return Err(DynamicsError::OutsideBox(x.to_vec()));
        }
        let t = self.angle_offset + self.angle_scale * x[0];
        let rho = t + self.thickness_scale * x[2];
        let (s, c) = t.sin_cos();
        Ok([rho * c, x[1], rho * s])
    }

    pub fn inverse(&self, y: &[f64]) -> Result<[f64; 3], DynamicsError> {
        if y.len() != 3 {
            return Err(DynamicsError::DimensionMismatch {
                expected: 3,
                got: y.len(),
            });
        }
        let rho = y[0].hypot(y[2]);
        let phi = y[2].atan2(y[0]);
        let (lo, hi) = self.t_range();
        // The admissible angle range is shorter than 2π, so at most one lift fits.
        let k = ((lo - phi) / TAU).ceil();
        let t = phi + k * TAU;
        let eps = 1e-12 * (1.0 + hi.abs());
        if t > hi + eps {
            return Err(DynamicsError::NotInImage(y.to_vec()));
        }
        let x1 = (t - self.angle_offset) / self.angle_scale;
        let x3 = (rho - t) / self.thickness_scale;
        if x3.abs() > self.x3_limit * (1.0 + 1e-12) + eps || rho == 0.0 {
            return Err(DynamicsError::NotInImage(y.to_vec()));
        }
        Ok([x1, y[1], x3])
    }

    /// Analytic Jacobian `∂y/∂x` (row = output).
    pub fn jacobian(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let (a, b, g) = (self.angle_offset, self.angle_scale, self.thickness_scale);
        let t = a + b * x[0];
        let rho = t + g * x[2];
        let (s, c) = t.sin_cos();
        [
            [b * (c - rho * s), 0.0, g * c],
            [0.0, 1.0, 0.0],
            [b * (s + rho * c), 0.0, g * s],
        ]
    }

    /// Closed form `det J = -b·γ·ρ`.
    pub fn jacobian_determinant(&self, x: &[f64]) -> f64 {
        let t = self.angle_offset + self.angle_scale * x[0];
        -self.angle_scale * self.thickness_scale * (t + self.thickness_scale * x[2])
    }

    pub fn apply_to_trajectory(&self, traj: &Trajectory) -> Result<Trajectory, DynamicsError> {
        if traj.dim != 3 {
            return Err(DynamicsError::DimensionMismatch {
                expected: 3,
                got: traj.dim,
            });
        }
        let mut points = Vec::with_capacity(traj.points.len());
        for p in traj.iter_points() {
            points.extend_from_slice(&self.forward(p)?);
        }
        let mut origin = traj.origin.clone();
        origin.transform = Some("swiss_roll".into());
        Trajectory::new(3, traj.dt, points, origin)
    }
}
