use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MsmError;

/// Row-normalized transition counts restricted to the active states (those
/// with outgoing counts into the active set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub lag_steps: usize,
    pub n_states: usize,
    /// Original ids of the active states; row/column `a` of `p` is `active[a]`.
    pub active: Vec<usize>,
    /// States flagged for having no outgoing counts (after pruning).
    pub excluded: Vec<usize>,
    /// Full `n_states × n_states` counts, row-major.
    pub counts: Vec<u64>,
    /// Active-set transition matrix, row-major.
    pub p: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn p_matrix(&self) -> DMatrix<f64> {
        let m = self.n_active();
        DMatrix::from_row_slice(m, m, &self.p)
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_states + j]
    }

    /// Build directly from a row-stochastic matrix (all states active).
    pub fn from_probabilities(p: &DMatrix<f64>, lag_steps: usize) -> Result<Self, MsmError> {
        let m = p.nrows();
        if m == 0 || p.ncols() != m {
            return Err(MsmError::Invalid(
                "transition matrix must be square and nonempty".into(),
            ));
        }
        for i in 0..m {
            let s: f64 = p.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 || p.row(i).iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(MsmError::Invalid(format!(
                    "row {i} is not a probability vector"
                )));
            }
        }
        let mut flat = Vec::with_capacity(m * m);
        for i in 0..m {
            flat.extend(p.row(i).iter());
        }
        Ok(Self {
            lag_steps,
            n_states: m,
            active: (0..m).collect(),
            excluded: Vec::new(),
            counts: vec![0; m * m],
            p: flat,
        })
    }
}

/// `counts_ij = #{k : l_k = i, l_{k+lag} = j}` summed over sequences.
pub fn count_transition_matrix(
    sequences: &[Vec<usize>],
    n_states: usize,
    lag_steps: usize,
) -> Result<TransitionMatrix, MsmError> {
    if lag_steps == 0 {
        return Err(MsmError::Invalid("lag must be at least 1".into()));
    }
    let mut counts = vec![0u64; n_states * n_states];
    for seq in sequences {
        if seq.len() <= lag_steps {
            return Err(MsmError::SequenceTooShort {
                len: seq.len(),
                lag: lag_steps,
            });
        }
        if let Some(bad) = seq.iter().find(|l| **l >= n_states) {
            return Err(MsmError::Invalid(format!(
                "label {bad} >= n_states {n_states}"
            )));
        }
        for k in 0..seq.len() - lag_steps {
            counts[seq[k] * n_states + seq[k + lag_steps]] += 1;
        }
    }
    let mut active: Vec<bool> = (0..n_states)
        .map(|i| {
            counts[i * n_states..(i + 1) * n_states]
                .iter()
                .any(|c| *c > 0)
        })
        .collect();
    // Prune states whose only outgoing counts lead outside the active set.
    loop {
        let mut changed = false;
        for i in 0..n_states {
            if active[i] && !(0..n_states).any(|j| active[j] && counts[i * n_states + j] > 0) {
                active[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let ids: Vec<usize> = (0..n_states).filter(|i| active[*i]).collect();
    let excluded: Vec<usize> = (0..n_states).filter(|i| !active[*i]).collect();
    if ids.is_empty() {
        return Err(MsmError::NoTransitions(excluded));
    }
    let m = ids.len();
    let mut p = vec![0.0; m * m];
    for (a, &i) in ids.iter().enumerate() {
        let total: u64 = ids.iter().map(|&j| counts[i * n_states + j]).sum();
        for (b, &j) in ids.iter().enumerate() {
            p[a * m + b] = counts[i * n_states + j] as f64 / total as f64;
        }
    }
    Ok(TransitionMatrix {
        lag_steps,
        n_states,
        active: ids,
        excluded,
        counts,
        p,
    })
}

/// Stationary distribution `π = πP`, by a direct solve with a power-iteration
/// fallback on the lazy chain.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Vec<f64> {
    let m = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(m, m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    if let Some(pi) = a.lu().solve(&rhs) {
        if pi.iter().all(|v| v.is_finite() && *v >= -1e-12) {
            let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
            let s: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= s);
            return pi;
        }
    }
    let lazy = (p + DMatrix::<f64>::identity(m, m)) * 0.5;
    let mut pi = nalgebra::RowDVector::from_element(m, 1.0 / m as f64);
    for _ in 0..100_000 {
        let next = &pi * &lazy;
        let diff = (&next - &pi).abs().max();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter().map(|v| v / s).collect()
}
