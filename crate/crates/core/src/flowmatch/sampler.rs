use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::models::VelocityFieldModel;
use super::FlowError;
use crate::neural::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeMethod {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSolverConfig {
    pub method: OdeMethod,
    pub n_steps: usize,
    /// Seed for the initial `N(0, I)` draws.
    pub seed: u64,
}

impl Default for OdeSolverConfig {
    fn default() -> Self {
        Self {
            method: OdeMethod::Rk4,
            n_steps: 32,
            seed: 0,
        }
    }
}

impl OdeSolverConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.n_steps == 0 {
            return Err(FlowError::InvalidConfig(
                "ode n_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Integrate `dY/ds = field(s, Y)` from `s = 0` to `s = 1` in `n_steps`
/// uniform steps.
pub fn integrate<F>(
    y0: Matrix,
    method: OdeMethod,
    n_steps: usize,
    mut field: F,
) -> Result<Matrix, FlowError>
where
    F: FnMut(f64, &Matrix) -> Result<Matrix, FlowError>,
{
    if n_steps == 0 {
        return Err(FlowError::InvalidConfig(
            "ode n_steps must be at least 1".into(),
        ));
    }
    let h = 1.0 / n_steps as f64;
    let mut y = y0;
    for k in 0..n_steps {
        let s = k as f64 / n_steps as f64;
        match method {
            OdeMethod::Euler => {
                let k1 = field(s, &y)?;
                y.scaled_add(h, &k1);
            }
            OdeMethod::Rk4 => {
                let k1 = field(s, &y)?;
                let k2 = field(s + 0.5 * h, &(&y + &(&k1 * (0.5 * h))))?;
                let k3 = field(s + 0.5 * h, &(&y + &(&k2 * (0.5 * h))))?;
                let k4 = field(s + h, &(&y + &(&k3 * h)))?;
                let incr = (k1 + &(k2 * 2.0) + &(k3 * 2.0) + &k4) * (h / 6.0);
                y += &incr;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFiniteState { step: k + 1 });
        }
    }
    Ok(y)
}

fn initial(rows: usize, dim: usize, seed: u64) -> Matrix {
    let mut buf = vec![0.0; rows * dim];
    rng::fill_normal(&mut rng::stream(seed), &mut buf);
    Array2::from_shape_vec((rows, dim), buf).expect("shape")
}

/// `n` samples of `Y¹` for one fixed condition value.
pub fn sample_flow(
    v: &VelocityFieldModel,
    condition: &[f64],
    n: usize,
    solver: &OdeSolverConfig,
) -> Result<Matrix, FlowError> {
    if condition.len() != v.condition_dim {
        return Err(FlowError::DimensionMismatch {
            what: "sampling condition",
            expected: v.condition_dim,
            got: condition.len(),
        });
    }
    let cond = ArrayView2::from_shape((1, condition.len()), condition)
        .expect("shape")
        .broadcast((n, condition.len()))
        .expect("broadcast")
        .to_owned();
    sample_flow_batch(v, cond.view(), solver)
}

/// One sample per condition row.
pub fn sample_flow_batch(
    v: &VelocityFieldModel,
    conditions: ArrayView2<f64>,
    solver: &OdeSolverConfig,
) -> Result<Matrix, FlowError> {
    solver.validate()?;
    if conditions.ncols() != v.condition_dim {
        return Err(FlowError::DimensionMismatch {
            what: "sampling condition",
            expected: v.condition_dim,
            got: conditions.ncols(),
        });
    }
    let n = conditions.nrows();
    let y0 = initial(n, v.state_dim, solver.seed);
    let mut s_buf = vec![0.0; n];
    integrate(y0, solver.method, solver.n_steps, |s, y| {
        s_buf.fill(s);
        v.velocity(&s_buf, y.view(), conditions)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmatch::models::Direction;
    use crate::neural::{Activation, Mlp};
    use ndarray::array;

    fn constant_field(c: [f64; 2]) -> VelocityFieldModel {
        let mut net = Mlp::zeros(&[8 + 2, 2], Activation::Silu).unwrap();
        net.biases[0] = array![[c[0], c[1]]];
        VelocityFieldModel::from_net(net, 2, 0, Direction::Forward, 4).unwrap()
    }

    #[test]
    fn single_step_constant_field_is_exact() {
        let y = integrate(array![[0.0, 1.0]], OdeMethod::Euler, 1, |_, y| {
            Ok(y.mapv(|_| 0.75))
        })
        .unwrap();
        assert_eq!(y, array![[0.75, 1.75]]);
    }

    #[test]
    fn constant_field_shifts_exactly() {
        let v = constant_field([0.5, -0.25]);
        for method in [OdeMethod::Euler, OdeMethod::Rk4] {
            let cfg = OdeSolverConfig {
                method,
                n_steps: 8,
                seed: 3,
            };
            let y1 = sample_flow(&v, &[], 5, &cfg).unwrap();
            let y0 = initial(5, 2, 3);
            for i in 0..5 {
                assert!((y1[[i, 0]] - (y0[[i, 0]] + 0.5)).abs() < 1e-14);
                assert!((y1[[i, 1]] - (y0[[i, 1]] - 0.25)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let v = constant_field([0.0, 0.0]);
        let cfg = OdeSolverConfig::default();
        assert_eq!(
            sample_flow(&v, &[], 4, &cfg).unwrap(),
            initial(4, 2, cfg.seed)
        );
    }

    #[test]
    fn linear_field_rk4_matches_exponential() {
        let y0 = array![[1.0, -2.0], [0.3, 0.7]];
        let y1 = integrate(y0.clone(), OdeMethod::Rk4, 100, |_, y| Ok(y.clone())).unwrap();
        let e = std::f64::consts::E;
        for (a, b) in y1.iter().zip(y0.iter()) {
            assert!(((a - e * b) / (e * b)).abs() <= 1e-6);
        }
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let err = |n| {
            let y = integrate(array![[1.0]], OdeMethod::Rk4, n, |_, y| Ok(y.clone())).unwrap();
            (y[[0, 0]] - std::f64::consts::E).abs()
        };
        for n in [4, 8, 16] {
            let ratio = err(n) / err(2 * n);
            assert!((8.0..=32.0).contains(&ratio), "n = {n}: ratio {ratio}");
        }
    }

    #[test]
    fn time_dependent_field_uses_stage_times() {
        // dy/ds = 3 s², exact solution y(1) = y(0) + 1; rk4 is exact for quadratics.
        let y = integrate(array![[0.0]], OdeMethod::Rk4, 3, |s, y| {
            Ok(y.mapv(|_| 3.0 * s * s))
        })
        .unwrap();
        assert!((y[[0, 0]] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn blow_up_reports_step() {
        let r = integrate(array![[1.0]], OdeMethod::Euler, 10, |s, y| {
            Ok(if s > 0.45 {
                y.mapv(|_| f64::INFINITY)
            } else {
                y.clone()
            })
        });
        assert!(matches!(r, Err(FlowError::NonFiniteState { step: 6 })));
    }

    #[test]
    fn condition_width_checked_and_zero_steps_rejected() {
        let v = constant_field([0.0, 0.0]);
        assert!(sample_flow(&v, &[1.0], 3, &OdeSolverConfig::default()).is_err());
        let cfg = OdeSolverConfig {
            n_steps: 0,
            ..Default::default()
        };
        assert!(sample_flow(&v, &[], 3, &cfg).is_err());
    }
}
