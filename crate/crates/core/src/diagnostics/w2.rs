use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::rng;

pub const EXACT_MAX: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum W2Mode {
    Exact,
    Sliced { n_projections: usize, seed: u64 },
}

impl W2Mode {
    /// Exact when both sets have `n ≤ 2048` equal sizes, otherwise sliced
    /// with 128 projections.
    pub fn auto(n: usize, m: usize, seed: u64) -> Self {
        if n == m && n <= EXACT_MAX {
            W2Mode::Exact
        } else {
            W2Mode::Sliced {
                n_projections: 128,
                seed,
            }
        }
    }
}

/// Empirical 2-Wasserstein distance between two sample sets with uniform
/// weights.
pub fn empirical_w2(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    mode: W2Mode,
) -> Result<f64, DiagError> {
    if a.ncols() != b.ncols() {
        return Err(DiagError::Invalid(format!(
            "dimensions {} and {} differ",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(DiagError::Invalid("empty sample set".into()));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(DiagError::Invalid("non-finite sample".into()));
    }
    match mode {
        W2Mode::Exact => {
            let n = a.nrows();
            if n != b.nrows() {
                return Err(DiagError::UnequalSizes(n, b.nrows()));
            }
            if n > EXACT_MAX {
                return Err(DiagError::TooLarge {
                    max: EXACT_MAX,
                    got: n,
                });
            }
            let cost: Vec<f64> = (0..n)
                .flat_map(|i| {
                    (0..n).map(move |j| {
                        a.row(i)
                            .iter()
                            .zip(b.row(j).iter())
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum()
                    })
                })
                .collect();
            let perm = assignment(&cost, n);
            let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            Ok((total / n as f64).max(0.0).sqrt())
        }
        W2Mode::Sliced {
            n_projections,
            seed,
        } => {
            if n_projections == 0 {
                return Err(DiagError::Invalid(
                    "n_projections must be at least 1".into(),
                ));
            }
            let d = a.ncols();
            let mut r = rng::stream(seed);
            let mut acc = 0.0;
            let mut dir = vec![0.0; d];
            for _ in 0..n_projections {
                loop {
                    rng::fill_normal(&mut r, &mut dir);
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        dir.iter_mut().for_each(|v| *v /= norm);
                        break;
                    }
                }
                let project = |m: ArrayView2<f64>| {
                    let mut p: Vec<f64> = m
                        .rows()
                        .into_iter()
                        .map(|row| row.iter().zip(&dir).map(|(x, w)| x * w).sum())
                        .collect();
                    p.sort_by(f64::total_cmp);
                    p
                };
                acc += w2_squared_1d(&project(a), &project(b));
            }
            Ok((acc / n_projections as f64).sqrt())
        }
    }
}

/// Squared W2 between two sorted 1-D empirical measures of any sizes, by
/// walking the merged quantile levels.
pub fn w2_squared_1d(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
    }
    let (mut i, mut j) = (0, 0);
    let mut level = 0.0;
    let mut acc = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        acc += (next - level) * (a[i] - b[j]).powi(2);
        level = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    acc
}

/// Minimum-cost perfect assignment for a square row-major cost matrix
/// (shortest augmenting paths with potentials, O(n³)). Returns the column
/// assigned to each row.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    // 1-based arrays with a dummy column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}
