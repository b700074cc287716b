use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DiagError;

/// Axis-aligned grid of `bins[k]` cells per dimension over `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins: Vec<usize>,
}

impl GridSpec {
    /// Bounding box of `points` with `bins_per_dim` cells per axis.
    pub fn covering(points: ArrayView2<f64>, bins_per_dim: usize) -> Result<Self, DiagError> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 || bins_per_dim == 0 {
            return Err(DiagError::Invalid(
                "grid needs points, dimensions and bins".into(),
            ));
        }
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for row in points.rows() {
            for (k, v) in row.iter().enumerate() {
                lower[k] = lower[k].min(*v);
                upper[k] = upper[k].max(*v);
            }
        }
        for k in 0..d {
            if !(upper[k] > lower[k]) {
                let c = lower[k];
                lower[k] = c - 0.5;
                upper[k] = c + 0.5;
            }
        }
        Ok(Self {
            lower,
            upper,
            bins: vec![bins_per_dim; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| (self.upper[k] - self.lower[k]) / self.bins[k] as f64)
            .collect()
    }

    /// Flat index of the cell containing `x` (clamped to the grid).
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let mut idx = 0;
        for k in 0..self.dim() {
            let c = ((x[k] - self.lower[k]) / h[k]).floor();
            let c = (c.max(0.0) as usize).min(self.bins[k] - 1);
            idx = idx * self.bins[k] + c;
        }
        idx
    }

    /// Center of cell `flat`.
    pub fn node(&self, mut flat: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut out = vec![0.0; self.dim()];
        for k in (0..self.dim()).rev() {
            let c = flat % self.bins[k];
            flat /= self.bins[k];
            out[k] = self.lower[k] + (c as f64 + 0.5) * h[k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestFunction {
    /// `scale · exp(-½ Σ ((x_k - c_k) / h_k)²)`.
    Gaussian {
        center: Vec<f64>,
        bandwidth: Vec<f64>,
        scale: f64,
    },
    /// `scale · x_index`.
    Coordinate { index: usize, scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Gaussian {
                center,
                bandwidth,
                scale,
            } => {
                let q: f64 = x
                    .iter()
                    .zip(center)
                    .zip(bandwidth)
                    .map(|((v, c), h)| ((v - c) / h).powi(2))
                    .sum();
                scale * (-0.5 * q).exp()
            }
            TestFunction::Coordinate { index, scale } => scale * x[*index],
        }
    }

    fn scale_mut(&mut self) -> &mut f64 {
        match self {
            TestFunction::Gaussian { scale, .. } | TestFunction::Coordinate { scale, .. } => scale,
        }
    }

    /// Discrete `H¹_ρ` norm: sample mean of `f²` plus the sample mean of the
    /// squared central-difference gradient with per-axis step `step`.
    pub fn h1_norm(&self, samples: ArrayView2<f64>, step: &[f64]) -> f64 {
        let n = samples.nrows().max(1) as f64;
        let mut acc = 0.0;
        let mut buf = vec![0.0; samples.ncols()];
        for row in samples.rows() {
            buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
            let f = self.eval(&buf);
            acc += f * f;
            for k in 0..buf.len() {
                let orig = buf[k];
                buf[k] = orig + step[k];
                let fp = self.eval(&buf);
                buf[k] = orig - step[k];
                let fm = self.eval(&buf);
                buf[k] = orig;
                let g = (fp - fm) / (2.0 * step[k]);
                acc += g * g;
            }
        }
        (acc / n).sqrt()
    }

    /// Rescale to unit discrete `H¹_ρ` norm (no-op for a zero function).
    pub fn normalized(mut self, samples: ArrayView2<f64>, step: &[f64]) -> Self {
        let norm = self.h1_norm(samples, step);
        if norm > 0.0 && norm.is_finite() {
            *self.scale_mut() /= norm;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakErrorConfig {
    pub bins_per_dim: usize,
    pub dictionary_size: usize,
    pub min_samples_per_cell: usize,
    /// Rows used to estimate each test function's norm.
    pub norm_samples: usize,
}

impl Default for WeakErrorConfig {
    fn default() -> Self {
        Self {
            bins_per_dim: 5,
            dictionary_size: 25,
            min_samples_per_cell: 10,
            norm_samples: 4000,
        }
    }
}

fn strided(points: ArrayView2<f64>, max: usize) -> ndarray::Array2<f64> {
    let n = points.nrows();
    if n <= max {
        return points.to_owned();
    }
    let idx: Vec<usize> = (0..max).map(|k| k * n / max).collect();
    points.select(ndarray::Axis(0), &idx)
}

/// Gaussians centered on the most occupied grid nodes (descending count,
/// ties by node index), bandwidth twice the grid spacing, each normalized to
/// unit discrete `H¹_ρ` norm under `samples`. Smaller dictionaries are
/// prefixes of larger ones. Also returns warnings about thin cells.
pub fn build_dictionary(
    samples: ArrayView2<f64>,
    grid: &GridSpec,
    size: usize,
    cfg: &WeakErrorConfig,
) -> (Vec<TestFunction>, Vec<String>) {
    let mut counts = vec![0usize; grid.n_cells()];
    for row in samples.rows() {
        let r: Vec<f64> = row.to_vec();
        counts[grid.cell_of(&r)] += 1;
    }
    let mut order: Vec<usize> = (0..grid.n_cells()).collect();
    order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
    let mut warnings = Vec::new();
    let thin = counts
        .iter()
        .filter(|c| **c > 0 && **c < cfg.min_samples_per_cell)
        .count();
    if thin > 0 {
        warnings.push(format!(
            "{thin} occupied grid cells have fewer than {} samples",
            cfg.min_samples_per_cell
        ));
    }
    if size > grid.n_cells() {
        warnings.push(format!(
            "dictionary size {size} exceeds {} grid nodes",
            grid.n_cells()
        ));
    }
    let h = grid.spacing();
    let bandwidth: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
    let step: Vec<f64> = h.iter().map(|v| 0.5 * v).collect();
    let norm_rows = strided(samples, cfg.norm_samples);
    let dict = order
        .iter()
        .take(size)
        .map(|&c| {
            TestFunction::Gaussian {
                center: grid.node(c),
                bandwidth: bandwidth.clone(),
                scale: 1.0,
            }
            .normalized(norm_rows.view(), &step)
        })
        .collect();
    (dict, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairContribution {
    /// Index into the `g` (source-side) dictionary.
    pub g: usize,
    /// Index into the `f` (target-side) dictionary.
    pub f: usize,
    pub true_pairing: f64,
    pub model_pairing: f64,
    pub difference: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorErrorReport {
    pub weak_error: f64,
    /// Standard error of the maximizing pairing difference.
    pub noise: f64,
    pub argmax: (usize, usize),
    pub dictionary_size: (usize, usize),
    pub n_samples: usize,
    pub grid_source: Option<GridSpec>,
    pub grid_target: Option<GridSpec>,
    pub restriction: String,
    pub contributions: Vec<PairContribution>,
    pub warnings: Vec<String>,
}

/// Sample estimate of `⟨g, K f⟩ − ⟨g, K̂ f⟩` as the mean of
/// `g(x_n)·(f(y_n) − f(ŷ_n))`, with its standard error.
pub fn pairing_error(
    g: &TestFunction,
    f: &TestFunction,
    x: ArrayView2<f64>,
    y_true: ArrayView2<f64>,
    y_model: ArrayView2<f64>,
) -> PairContribution {
    let gx: Vec<f64> = x.rows().into_iter().map(|r| g.eval(&r.to_vec())).collect();
    let fy: Vec<f64> = y_true
        .rows()
        .into_iter()
        .map(|r| f.eval(&r.to_vec()))
        .collect();
    let fh: Vec<f64> = y_model
        .rows()
        .into_iter()
        .map(|r| f.eval(&r.to_vec()))
        .collect();
    contribution(0, 0, &gx, &fy, &fh)
}

fn contribution(gi: usize, fi: usize, gx: &[f64], fy: &[f64], fh: &[f64]) -> PairContribution {
    let n = gx.len() as f64;
    let (mut t, mut m, mut s, mut ss) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..gx.len() {
        let a = gx[k] * fy[k];
        let b = gx[k] * fh[k];
        t += a;
        m += b;
        s += a - b;
        ss += (a - b) * (a - b);
    }
    let mean = s / n;
    let var = if n > 1.0 {
        ((ss - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    PairContribution {
        g: gi,
        f: fi,
        true_pairing: t / n,
        model_pairing: m / n,
        difference: mean,
        std_error: (var / n).sqrt(),
    }
}

/// Maximum absolute pairing difference over all `(g, f)` dictionary pairs.
pub fn weak_error_with_dictionaries(
    g_dict: &[TestFunction],
    f_dict: &[TestFunction],
    x: ArrayView2<f64>,
    y_true: ArrayView2<f64>,
    y_model: ArrayView2<f64>,
) -> Result<OperatorErrorReport, DiagError> {
    let n = x.nrows();
    if n == 0 || y_true.nrows() != n || y_model.nrows() != n {
        return Err(DiagError::Invalid(
            "x, y and model samples need equal nonzero row counts".into(),
        ));
    }
    if y_true.ncols() != y_model.ncols() {
        return Err(DiagError::Invalid(
            "true and model samples differ in width".into(),
        ));
    }
    if g_dict.is_empty() || f_dict.is_empty() {
        return Err(DiagError::Invalid("empty test dictionary".into()));
    }
    let eval_all = |d: &TestFunction, m: ArrayView2<f64>| -> Vec<f64> {
        let mut buf = vec![0.0; m.ncols()];
        m.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                d.eval(&buf)
            })
            .collect()
    };
    let gx: Vec<Vec<f64>> = g_dict.iter().map(|g| eval_all(g, x)).collect();
    let fy: Vec<Vec<f64>> = f_dict.iter().map(|f| eval_all(f, y_true)).collect();
    let fh: Vec<Vec<f64>> = f_dict.iter().map(|f| eval_all(f, y_model)).collect();
    let mut contributions = Vec::with_capacity(g_dict.len() * f_dict.len());
    for (gi, g) in gx.iter().enumerate() {
        for fi in 0..f_dict.len() {
            contributions.push(contribution(gi, fi, g, &fy[fi], &fh[fi]));
        }
    }
    let best = contributions
        .iter()
        .fold(None::<&PairContribution>, |acc, c| match acc {
            Some(b) if b.difference.abs() >= c.difference.abs() => Some(b),
            _ => Some(c),
        })
        .expect("nonempty");
    Ok(OperatorErrorReport {
        weak_error: best.difference.abs(),
        noise: best.std_error,
        argmax: (best.g, best.f),
        dictionary_size: (g_dict.len(), f_dict.len()),
        n_samples: n,
        grid_source: None,
        grid_target: None,
        restriction:
            "maximum over a finite Gaussian test dictionary; a lower bound on the operator norm"
                .into(),
        contributions,
        warnings: Vec::new(),
    })
}

/// Dictionary-restricted weak error between the true transition pairs
/// `(x_n, y_n)` and model samples `ŷ_n ~ K̂(x_n, ·)`. Source test functions
/// live on the grid over `x`, target test functions on the grid over `y`.
pub fn weak_operator_error(
    x: ArrayView2<f64>,
    y_true: ArrayView2<f64>,
    y_model: ArrayView2<f64>,
    cfg: &WeakErrorConfig,
) -> Result<OperatorErrorReport, DiagError> {
    let gs = GridSpec::covering(x, cfg.bins_per_dim)?;
    let gt = GridSpec::covering(y_true, cfg.bins_per_dim)?;
    let (g_dict, mut warnings) = build_dictionary(x, &gs, cfg.dictionary_size, cfg);
    let (f_dict, w2) = build_dictionary(y_true, &gt, cfg.dictionary_size, cfg);
    warnings.extend(w2);
    let mut report = weak_error_with_dictionaries(&g_dict, &f_dict, x, y_true, y_model)?;
    report.grid_source = Some(gs);
    report.grid_target = Some(gt);
    report.warnings = warnings;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array2;

    fn samples(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut r = rng::stream(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng::normal(&mut r));
        let y = Array2::from_shape_fn((n, 2), |(i, j)| 0.5 * x[[i, j]] + rng::normal(&mut r));
        (x, y)
    }

    #[test]
    fn grid_indexing_round_trip() {
        let g = GridSpec {
            lower: vec![0.0, 0.0],
            upper: vec![4.0, 2.0],
            bins: vec![4, 2],
        };
        assert_eq!(g.n_cells(), 8);
        for c in 0..8 {
            assert_eq!(g.cell_of(&g.node(c)), c);
        }
        assert_eq!(g.cell_of(&[100.0, -5.0]), 6);
    }

    #[test]
    fn identity_substitution_gives_zero() {
        let (x, y) = samples(500, 1);
        let r =
            weak_operator_error(x.view(), y.view(), y.view(), &WeakErrorConfig::default()).unwrap();
        assert_eq!(r.weak_error, 0.0);
        assert_eq!(r.dictionary_size, (25, 25));
    }

    #[test]
    fn constant_shift_with_coordinate_functions() {
        let (x, y) = samples(300, 2);
        let c = 0.7;
        let shifted = y.mapv(|v| v + c);
        let g = TestFunction::Coordinate {
            index: 0,
            scale: 1.0,
        };
        let r = weak_error_with_dictionaries(
            std::slice::from_ref(&g),
            std::slice::from_ref(&g),
            x.view(),
            y.view(),
            shifted.view(),
        )
        .unwrap();
        let mean_g = x.column(0).mean().unwrap();
        assert!((r.weak_error - c * mean_g.abs()).abs() < 1e-12);
    }

    #[test]
    fn report_is_max_of_recomputed_pairings() {
        let (x, y) = samples(400, 3);
        let (_, yh) = samples(400, 4);
        let cfg = WeakErrorConfig::default();
        let r = weak_operator_error(x.view(), y.view(), yh.view(), &cfg).unwrap();
        let gs = r.grid_source.clone().unwrap();
        let gt = r.grid_target.clone().unwrap();
        let (gd, _) = build_dictionary(x.view(), &gs, 25, &cfg);
        let (fd, _) = build_dictionary(y.view(), &gt, 25, &cfg);
        let mut best: f64 = 0.0;
        for g in &gd {
            for f in &fd {
                best = best.max(
                    pairing_error(g, f, x.view(), y.view(), yh.view())
                        .difference
                        .abs(),
                );
            }
        }
        assert!((best - r.weak_error).abs() < 1e-12);
        assert!(r.weak_error > 0.0 && r.noise > 0.0);
    }

    #[test]
    fn larger_dictionary_never_decreases_error() {
        let (x, y) = samples(400, 5);
        let (_, yh) = samples(400, 6);
        let mut last = 0.0;
        for size in [4, 8, 16, 25] {
            let cfg = WeakErrorConfig {
                dictionary_size: size,
                ..Default::default()
            };
            let e = weak_operator_error(x.view(), y.view(), yh.view(), &cfg)
                .unwrap()
                .weak_error;
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn normalized_functions_have_unit_norm() {
        let (x, _) = samples(200, 7);
        let f = TestFunction::Gaussian {
            center: vec![0.1, -0.2],
            bandwidth: vec![0.8, 0.8],
            scale: 3.0,
        }
        .normalized(x.view(), &[0.1, 0.1]);
        assert!((f.h1_norm(x.view(), &[0.1, 0.1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thin_cells_are_flagged() {
        let (x, y) = samples(30, 8);
        let r =
            weak_operator_error(x.view(), y.view(), y.view(), &WeakErrorConfig::default()).unwrap();
        assert!(!r.warnings.is_empty());
    }
}
