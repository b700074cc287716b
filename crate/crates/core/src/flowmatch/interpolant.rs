use ndarray::Array2;

use super::FlowError;
use crate::neural::Matrix;

/// The straight path `I(s; y0, y1) = (1 - s)·y0 + s·y1` with velocity `y1 - y0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Interpolant;

impl Interpolant {
    pub fn point(self, s: f64, y0: &[f64], y1: &[f64]) -> Result<Vec<f64>, FlowError> {
        interpolate(s, y0, y1)
    }

    pub fn velocity(self, y0: &[f64], y1: &[f64]) -> Vec<f64> {
        y1.iter().zip(y0).map(|(b, a)| b - a).collect()
    }
}

pub fn interpolate(s: f64, y0: &[f64], y1: &[f64]) -> Result<Vec<f64>, FlowError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(FlowError::InvalidTime(s));
    }
    if y0.len() != y1.len() {
        return Err(FlowError::DimensionMismatch {
            what: "interpolation endpoint",
            expected: y0.len(),
            got: y1.len(),
        });
    }
    Ok(y0.iter().zip(y1).map(|(a, b)| point(s, *a, *b)).collect())
}

#[inline]
fn point(s: f64, a: f64, b: f64) -> f64 {
    (1.0 - s) * a + s * b
}

/// Row `b` of the result is `I(s[b]; y0[b], y1[b])`.
pub fn interpolate_rows(s: &[f64], y0: &Matrix, y1: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(y0.dim());
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = point(s[b], y0[[b, j]], y1[[b, j]]);
        }
    }
    out
}

/// `[sin(2^k π s), cos(2^k π s)]` for `k = 0..n_freq`, one row per time.
pub fn fourier_features(s: &[f64], n_freq: usize) -> Matrix {
    let mut out = Array2::zeros((s.len(), 2 * n_freq));
    for (b, &t) in s.iter().enumerate() {
        for k in 0..n_freq {
            let w = (1u64 << k) as f64 * std::f64::consts::PI * t;
            out[[b, 2 * k]] = w.sin();
            out[[b, 2 * k + 1]] = w.cos();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        let (a, b) = ([0.3, -1.7], [2.9, 4.1]);
        assert_eq!(interpolate(0.0, &a, &b).unwrap(), a.to_vec());
        assert_eq!(interpolate(1.0, &a, &b).unwrap(), b.to_vec());
        assert_eq!(
            interpolate(0.5, &[0.0, 0.0], &[2.0, 4.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            Interpolant.velocity(&[1.0, 1.0], &[2.0, 4.0]),
            vec![1.0, 3.0]
        );
    }

    #[test]
    fn time_outside_unit_interval_is_rejected() {
        assert!(matches!(
            interpolate(1.5, &[0.0], &[1.0]),
            Err(FlowError::InvalidTime(_))
        ));
        assert!(matches!(
            interpolate(-1e-9, &[0.0], &[1.0]),
            Err(FlowError::InvalidTime(_))
        ));
    }

    #[test]
    fn row_interpolation_matches_scalar_version() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[-1.0, 0.0], [5.0, 5.0]];
        let m = interpolate_rows(&[0.25, 0.75], &a, &b);
        assert_eq!(
            m.row(1).to_vec(),
            interpolate(0.75, &[3.0, 4.0], &[5.0, 5.0]).unwrap()
        );
    }

    #[test]
    fn fourier_layout() {
        let f = fourier_features(&[0.5], 2);
        assert!((f[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(f[[0, 1]].abs() < 1e-15);
        assert!(f[[0, 2]].abs() < 1e-15);
        assert!((f[[0, 3]] + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn endpoints_are_exact(a in prop::collection::vec(-1e6f64..1e6, 3), b in prop::collection::vec(-1e6f64..1e6, 3)) {
            prop_assert_eq!(interpolate(0.0, &a, &b).unwrap(), a.clone());
            prop_assert_eq!(interpolate(1.0, &a, &b).unwrap(), b.clone());
        }
    }
}
