//! Finite-difference verification of reverse-mode gradients.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter group, index within group)` of the worst entry.
    pub worst_index: (usize, usize),
    pub step: f64,
    pub checked: usize,
}

/// Relative error with a floor on the denominator, so entries whose true
/// gradient is near zero are judged on an absolute scale of `floor · tol`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare `analytic` against fourth-order central differences of `loss` for
/// the listed `(group, index)` entries of `params`. `params` is restored.
pub fn check_gradients<F>(
    params: &mut [Vec<f64>],
    analytic: &[Vec<f64>],
    indices: &[(usize, usize)],
    step: f64,
    floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let mut worst = (0.0, (0, 0));
    for &(g, i) in indices {
        let orig = params[g][i];
        let mut eval = |delta: f64, params: &mut [Vec<f64>]| {
            params[g][i] = orig + delta;
            loss(params)
        };
        let f2p = eval(2.0 * step, params);
        let f1p = eval(step, params);
        let f1m = eval(-step, params);
        let f2m = eval(-2.0 * step, params);
        params[g][i] = orig;
        let numeric = (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * step);
        let e = relative_error(analytic[g][i], numeric, floor);
        if e > worst.0 || !e.is_finite() {
            worst = (e, (g, i));
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        step,
        checked: indices.len(),
    }
}
