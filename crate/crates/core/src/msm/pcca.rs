use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::transition::{stationary_distribution, TransitionMatrix};
use super::MsmError;

const IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PccaResult {
    /// Active states of the transition matrix, in row order of `chi`.
    pub states: Vec<usize>,
    pub n_clusters: usize,
    /// Row-major `n_active × n_clusters` memberships.
    pub chi: Vec<f64>,
    /// `argmax` of each row of `chi`.
    pub labels: Vec<usize>,
    /// Leading eigenvalues of the reversibilized matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub stationary: Vec<f64>,
}

impl PccaResult {
    pub fn membership(&self, a: usize) -> &[f64] {
        &self.chi[a * self.n_clusters..(a + 1) * self.n_clusters]
    }

    /// Crisp label of an original state id, if it is active.
    pub fn label_of_state(&self, state: usize) -> Option<usize> {
        self.states
            .iter()
            .position(|s| *s == state)
            .map(|a| self.labels[a])
    }
}

/// PCCA+ on the reversible part `½(P + D⁻¹PᵀD)` (`D = diag π`) with
/// inner-simplex vertex selection.
pub fn pcca_plus(t: &TransitionMatrix, n_clusters: usize) -> Result<PccaResult, MsmError> {
    let p = t.p_matrix();
    let m = p.nrows();
    if n_clusters < 2 {
        return Err(MsmError::Invalid("n_clusters must be at least 2".into()));
    }
    if n_clusters > m {
        return Err(MsmError::Invalid(format!(
            "{n_clusters} clusters requested for {m} states"
        )));
    }
    let pi = stationary_distribution(&p);
    if pi.iter().any(|v| *v <= 0.0) {
        return Err(MsmError::Invalid(
            "chain is not irreducible on its active states".into(),
        ));
    }
    let mut prev = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            prev[(i, j)] = 0.5 * (p[(i, j)] + pi[j] * p[(j, i)] / pi[i]);
        }
    }
    let complex = prev.clone().complex_eigenvalues();
    let mut by_re: Vec<_> = complex.iter().collect();
    by_re.sort_by(|a, b| b.re.total_cmp(&a.re));
    for (index, ev) in by_re.iter().take(n_clusters).enumerate() {
        if ev.im.abs() > IMAG_TOL {
            return Err(MsmError::ComplexEigenvalues { index, imag: ev.im });
        }
    }

    let sq: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let mut s = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            s[(i, j)] = sq[i] * prev[(i, j)] / sq[j];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let eigenvalues: Vec<f64> = order[..n_clusters]
        .iter()
        .map(|i| eig.eigenvalues[*i])
        .collect();
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(MsmError::Defective("non-finite eigenvalue".into()));
    }

    // Right eigenvectors X = D^{-1/2} U, scaled so the first column is 1.
    let mut x = DMatrix::zeros(m, n_clusters);
    for (c, &k) in order[..n_clusters].iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        for i in 0..m {
            x[(i, c)] = u[i] / sq[i];
        }
    }
    let first_sign = x.column(0).sum().signum();
    let scale = x.column(0).iter().map(|v| v * first_sign).sum::<f64>() / m as f64;
    for i in 0..m {
        x[(i, 0)] *= first_sign / scale;
    }

    let idx = inner_simplex(&x);
    let mut vertices = DMatrix::zeros(n_clusters, n_clusters);
    for (r, &i) in idx.iter().enumerate() {
        vertices.set_row(r, &x.row(i));
    }
    let a = vertices
        .try_inverse()
        .ok_or_else(|| MsmError::Defective("simplex vertices are linearly dependent".into()))?;
    let mut chi = &x * a;
    for i in 0..m {
        let mut row_sum = 0.0;
        for c in 0..n_clusters {
            let v = chi[(i, c)].max(0.0);
            chi[(i, c)] = v;
            row_sum += v;
        }
        if row_sum <= 0.0 {
            return Err(MsmError::Defective(format!(
                "state {i} has no positive membership"
            )));
        }
        for c in 0..n_clusters {
            chi[(i, c)] /= row_sum;
        }
    }
    let mut flat = Vec::with_capacity(m * n_clusters);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = chi.row(i).iter().copied().collect();
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (c, v)| {
                if *v > acc.1 {
                    (c, *v)
                } else {
                    acc
                }
            });
        labels.push(best.0);
        flat.extend(row);
    }
    Ok(PccaResult {
        states: t.active.clone(),
        n_clusters,
        chi: flat,
        labels,
        eigenvalues,
        stationary: pi,
    })
}

/// Greedy vertex selection: start from the row of largest norm, then
/// repeatedly take the row farthest from the span of the chosen ones.
fn inner_simplex(x: &DMatrix<f64>) -> Vec<usize> {
    let (m, n) = x.shape();
    let mut index = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    for i in 0..m {
        let d = x.row(i).norm();
        if d > best {
            best = d;
            index[0] = i;
        }
    }
    let origin = x.row(index[0]).clone_owned();
    let mut ortho = x.clone();
    for i in 0..m {
        let r = ortho.row(i) - &origin;
        ortho.set_row(i, &r);
    }
    for k in 1..n {
        let temp = ortho.row(index[k - 1]).clone_owned();
        let mut max_dist = 0.0;
        for i in 0..m {
            let row = ortho.row(i).clone_owned();
            let proj = temp.dot(&row);
            let r = row - &temp * proj;
            ortho.set_row(i, &r);
            let d = r.norm();
            if d > max_dist && !index[..k].contains(&i) {
                max_dist = d;
                index[k] = i;
            }
        }
        if max_dist > 0.0 {
            ortho /= max_dist;
        }
    }
    index
}
