use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MsmError;
use crate::rng;

const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-6;

/// Microstate centers; points are assigned to the nearest center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Row-major `k × dim`.
    pub centers: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub inertia: f64,
    pub iterations: usize,
}

impl Discretization {
    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn assign_one(&self, p: &[f64]) -> (usize, f64) {
        nearest(&self.centers, self.dim, p)
    }

    pub fn assign(&self, points: ArrayView2<f64>) -> Vec<usize> {
        points
            .rows()
            .into_iter()
            .map(|r| self.assign_one(r.as_slice().expect("contiguous row")).0)
            .collect()
    }

    pub fn centers_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.k, self.dim), self.centers.clone()).expect("shape")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[f64], dim: usize, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding. Stops after 200 iterations or
/// when inertia changes by less than a relative 1e-6. An empty cluster is
/// re-seeded at the point farthest from its current center.
pub fn kmeans_discretize(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
) -> Result<(Discretization, Vec<usize>), MsmError> {
    let (n, dim) = points.dim();
    if k == 0 {
        return Err(MsmError::Invalid("k must be at least 1".into()));
    }
    if n < k {
        return Err(MsmError::TooFewPoints { n, k });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(MsmError::Invalid("non-finite point".into()));
    }
    let pts = points.as_standard_layout().into_owned();
    let data = pts.as_slice().expect("standard layout");
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut r = rng::stream(seed);

    // k-means++
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(row(r.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        let c = row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centers.extend_from_slice(&c);
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let mut new_inertia = 0.0;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(&centers, dim, row(i));
            labels[i] = c;
            dist[i] = d;
            new_inertia += d;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i] * dim..(labels[i] + 1) * dim]
                .iter_mut()
                .zip(row(i))
            {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            } else {
                let far = (0..n)
                    .filter(|i| !taken[*i])
                    .max_by(|a, b| dist[*a].total_cmp(&dist[*b]))
                    .expect("n >= k");
                taken[far] = true;
                dist[far] = 0.0;
                centers[c * dim..(c + 1) * dim].copy_from_slice(row(far));
            }
        }
        let converged = inertia.is_finite()
            && (inertia - new_inertia).abs() <= REL_TOL * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if converged || new_inertia == 0.0 {
            break;
        }
    }
    // Final assignment against the final centers.
    let mut final_inertia = 0.0;
    for i in 0..n {
        let (c, d) = nearest(&centers, dim, row(i));
        labels[i] = c;
        final_inertia += d;
    }
    Ok((
        Discretization {
            centers,
            k,
            dim,
            seed,
            inertia: final_inertia,
            iterations,
        },
        labels,
    ))
}
