//! Potential energy surfaces with analytic gradients.

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// A potential `V: R^D -> R`.
///
/// `Composite` stacks its parts on consecutive coordinate blocks and sums
/// them, which yields product systems (e.g. a slow double well next to a fast
/// Ornstein-Uhlenbeck coordinate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `cos(m θ) + k_r (|(x1,x2)| - 1)^2 + k_z x3^2` with `θ = atan2(x2, x1)`.
    SevenWell3d {
        #[serde(default = "default_radial_stiffness")]
        radial_stiffness: f64,
        #[serde(default = "default_multiplicity")]
        multiplicity: u32,
        #[serde(default = "default_ou_stiffness")]
        ou_stiffness: f64,
    },
    /// `h (x^2 - 1)^2`.
    DoubleWell1d {
        #[serde(default = "default_barrier")]
        barrier: f64,
    },
    /// `sum_i k_i x_i^2`.
    Quadratic {
        stiffness: Vec<f64>,
    },
    Composite {
        parts: Vec<PotentialSpec>,
    },
}

fn default_radial_stiffness() -> f64 {
    10.0
}
fn default_multiplicity() -> u32 {
    7
}
fn default_ou_stiffness() -> f64 {
    10.0
}
fn default_barrier() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::seven_well()
    }
}

impl PotentialSpec {
    pub fn seven_well() -> Self {
        PotentialSpec::SevenWell3d {
            radial_stiffness: 10.0,
            multiplicity: 7,
            ou_stiffness: 10.0,
        }
    }

    /// Slow double well in `x1` next to an independent fast OU coordinate `x2`.
    pub fn double_well_ou(barrier: f64, ou_stiffness: f64) -> Self {
        PotentialSpec::Composite {
            parts: vec![
                PotentialSpec::DoubleWell1d { barrier },
                PotentialSpec::Quadratic {
                    stiffness: vec![ou_stiffness],
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PotentialSpec::SevenWell3d { .. } => 3,
            PotentialSpec::DoubleWell1d { .. } => 1,
            PotentialSpec::Quadratic { stiffness } => stiffness.len(),
            PotentialSpec::Composite { parts } => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PotentialSpec::SevenWell3d { .. } => "seven_well_3d".into(),
            PotentialSpec::DoubleWell1d { .. } => "double_well_1d".into(),
            PotentialSpec::Quadratic { .. } => "quadratic".into(),
            PotentialSpec::Composite { parts } => {
                let names: Vec<String> = parts.iter().map(|p| p.name()).collect();
                format!("composite({})", names.join("+"))
            }
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |what: &str| Err(DynamicsError::InvalidConfig(what.to_string()));
        match self {
            PotentialSpec::SevenWell3d {
                radial_stiffness,
                multiplicity,
                ou_stiffness,
            } => {
                if !radial_stiffness.is_finite() || !ou_stiffness.is_finite() {
                    return bad("seven_well_3d stiffness must be finite");
                }
                if *multiplicity == 0 {
                    return bad("seven_well_3d multiplicity must be positive");
                }
            }
            PotentialSpec::DoubleWell1d { barrier } => {
                if !barrier.is_finite() {
                    return bad("double_well_1d barrier must be finite");
                }
            }
            PotentialSpec::Quadratic { stiffness } => {
                if stiffness.is_empty() || stiffness.iter().any(|k| !k.is_finite()) {
                    return bad("quadratic stiffness must be a nonempty list of finite values");
                }
            }
            PotentialSpec::Composite { parts } => {
                if parts.is_empty() {
                    return bad("composite potential needs at least one part");
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Value and analytic gradient at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>), DynamicsError> {
        let mut grad = vec![0.0; self.dim()];
        let v = self.evaluate_into(x, &mut grad)?;
        Ok((v, grad))
    }

    /// Like [`evaluate`](Self::evaluate) but writes the gradient into `grad`.
    pub fn evaluate_into(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DynamicsError> {
        let dim = self.dim();
        if x.len() != dim || grad.len() != dim {
            return Err(DynamicsError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        self.eval_unchecked(x, grad)
    }

    fn eval_unchecked(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DynamicsError> {
        match self {
            PotentialSpec::SevenWell3d {
                radial_stiffness: kr,
                multiplicity,
                ou_stiffness: kz,
            } => {
                let (x1, x2, x3) = (x[0], x[1], x[2]);
                let r2 = x1 * x1 + x2 * x2;
                if r2 == 0.0 {
                    return Err(DynamicsError::SingularPoint);
                }
                let r = r2.sqrt();
                let m = f64::from(*multiplicity);
                let theta = x2.atan2(x1);
                let (s, c) = (m * theta).sin_cos();
                // dθ/dx1 = -x2/r², dθ/dx2 = x1/r²
                let dv_dtheta = -m * s;
                let dv_dr = 2.0 * kr * (r - 1.0);
                grad[0] = dv_dtheta * (-x2 / r2) + dv_dr * (x1 / r);
                grad[1] = dv_dtheta * (x1 / r2) + dv_dr * (x2 / r);
                grad[2] = 2.0 * kz * x3;
                Ok(c + kr * (r - 1.0).powi(2) + kz * x3 * x3)
            }
            PotentialSpec::DoubleWell1d { barrier } => {
                let u = x[0] * x[0] - 1.0;
                grad[0] = 4.0 * barrier * x[0] * u;
                Ok(barrier * u * u)
            }
            PotentialSpec::Quadratic { stiffness } => {
                let mut v = 0.0;
                for ((g, xi), k) in grad.iter_mut().zip(x).zip(stiffness) {
                    v += k * xi * xi;
                    *g = 2.0 * k * xi;
                }
                Ok(v)
            }
            PotentialSpec::Composite { parts } => {
                let mut offset = 0;
                let mut v = 0.0;
                for p in parts {
                    let d = p.dim();
                    v += p.eval_unchecked(&x[offset..offset + d], &mut grad[offset..offset + d])?;
                    offset += d;
                }
                Ok(v)
            }
        }
    }
}
