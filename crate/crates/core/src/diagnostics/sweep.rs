use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::w2::{empirical_w2, W2Mode, EXACT_MAX};
use super::weak::{weak_operator_error, OperatorErrorReport, WeakErrorConfig};
use super::DiagError;
use crate::dynamics::TransitionPairSet;
use crate::flowmatch::{Direction, FlowModels, OdeSolverConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub weak: WeakErrorConfig,
    /// Pairs used for the weak error (uniform subsample when exceeded).
    pub max_samples: usize,
    /// Leading pairs of that subsample used for the joint-law W2.
    pub w2_samples: usize,
    pub w2_projections: usize,
    pub solver: OdeSolverConfig,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            weak: WeakErrorConfig::default(),
            max_samples: 20_000,
            w2_samples: 1024,
            w2_projections: 128,
            solver: OdeSolverConfig::default(),
            seed: 0,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<(), DiagError> {
        if self.max_samples == 0 || self.w2_samples == 0 || self.w2_projections == 0 {
            return Err(DiagError::Invalid(
                "sample counts and projections must be positive".into(),
            ));
        }
        if self.weak.bins_per_dim == 0
            || self.weak.dictionary_size == 0
            || self.weak.norm_samples == 0
        {
            return Err(DiagError::Invalid(
                "grid bins, dictionary size and norm samples must be positive".into(),
            ));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Forward and backward weak errors plus the W2 distance between true and
/// generated `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub forward: OperatorErrorReport,
    pub backward: OperatorErrorReport,
    pub w2_pairs: f64,
    pub w2_mode: W2Mode,
}

fn rows(flat: &[f64], dim: usize) -> Array2<f64> {
    Array2::from_shape_vec((flat.len() / dim, dim), flat.to_vec()).expect("row-major pairs")
}

/// Generate `ŷ` from each `x` with `v0` and `x̂` from each `y` with `v1`, then
/// compare against the data. Every call with the same config uses the same
/// subsample and sampling noise.
pub fn model_diagnostics(
    pairs: &TransitionPairSet,
    models: &FlowModels,
    cfg: &DiagnosticsConfig,
) -> Result<ModelDiagnostics, DiagError> {
    cfg.validate()?;
    if models.dim() != pairs.dim {
        return Err(DiagError::Invalid(format!(
            "models expect dimension {}, pairs have {}",
            models.dim(),
            pairs.dim
        )));
    }
    let sub = pairs.subsample(cfg.max_samples, derive_seed(cfg.seed, "diag-subsample"));
    let x = rows(&sub.x, sub.dim);
    let y = rows(&sub.y, sub.dim);
    let solver = |label: &str| OdeSolverConfig {
        seed: derive_seed(cfg.seed, label),
        ..cfg.solver.clone()
    };
    let y_hat = models.generate(Direction::Forward, x.view(), &solver("diag-forward"))?;
    let x_hat = models.generate(Direction::Backward, y.view(), &solver("diag-backward"))?;
    let forward = weak_operator_error(x.view(), y.view(), y_hat.view(), &cfg.weak)?;
    let backward = weak_operator_error(y.view(), x.view(), x_hat.view(), &cfg.weak)?;
    let m = cfg.w2_samples.min(x.nrows());
    let head = |a: &Array2<f64>| a.slice(ndarray::s![..m, ..]).to_owned();
    let truth = concatenate(Axis(1), &[head(&x).view(), head(&y).view()]).expect("same rows");
    let model = concatenate(Axis(1), &[head(&x).view(), head(&y_hat).view()]).expect("same rows");
    let w2_mode = if m <= EXACT_MAX {
        W2Mode::Exact
    } else {
        W2Mode::Sliced {
            n_projections: cfg.w2_projections,
            seed: derive_seed(cfg.seed, "diag-w2"),
        }
    };
    let w2_pairs = empirical_w2(truth.view(), model.view(), w2_mode)?;
    Ok(ModelDiagnostics {
        forward,
        backward,
        w2_pairs,
        w2_mode,
    })
}

/// One trained snapshot in a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepEntry<'a> {
    pub budget: usize,
    pub train_loss: f64,
    pub models: &'a FlowModels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: usize,
    pub train_loss: f64,
    pub weak_error_forward: f64,
    pub weak_error_backward: f64,
    pub noise_forward: f64,
    pub noise_backward: f64,
    pub w2_pairs: f64,
}

/// Diagnostics for each snapshot; `entries` must have strictly decreasing
/// training loss.
pub fn fmrc_vs_operator_error_sweep(
    pairs: &TransitionPairSet,
    entries: &[SweepEntry<'_>],
    cfg: &DiagnosticsConfig,
) -> Result<Vec<SweepRow>, DiagError> {
    if entries.is_empty() {
        return Err(DiagError::Invalid("empty sweep".into()));
    }
    for (k, e) in entries.iter().enumerate() {
        if !e.train_loss.is_finite() {
            return Err(DiagError::Invalid(format!(
                "row {k} has a non-finite training loss"
            )));
        }
        if k > 0 && !(e.train_loss < entries[k - 1].train_loss) {
            return Err(DiagError::UnsortedSweep(k));
        }
    }
    entries
        .iter()
        .map(|e| {
            let d = model_diagnostics(pairs, e.models, cfg)?;
            Ok(SweepRow {
                budget: e.budget,
                train_loss: e.train_loss,
                weak_error_forward: d.forward.weak_error,
                weak_error_backward: d.backward.weak_error,
                noise_forward: d.forward.noise,
                noise_backward: d.backward.noise,
                w2_pairs: d.w2_pairs,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), DiagError> {
    let io = |e: std::io::Error| DiagError::Invalid(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(
        f,
        "budget,train_loss,weak_error_forward,weak_error_backward,w2_pairs"
    )
    .map_err(io)?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.budget, r.train_loss, r.weak_error_forward, r.weak_error_backward, r.w2_pairs
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmatch::{train, ArchitectureConfig, TrainConfig, TrainMode};
    use crate::rng;

    fn toy() -> (TransitionPairSet, FlowModels) {
        let mut r = rng::stream(3);
        let n = 300;
        let x: Vec<f64> = (0..2 * n).map(|_| rng::normal(&mut r)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 * v + 0.5 * rng::normal(&mut r))
            .collect();
        let pairs = TransitionPairSet::new(2, 1, x, y).unwrap();
        let cfg = TrainConfig {
            iterations: 5,
            batch_size: 32,
            eval_every: 5,
            architecture: ArchitectureConfig {
                encoder_hidden: vec![4],
                velocity_hidden: vec![8],
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(&pairs, TrainMode::Fmrc, &cfg).unwrap();
        (pairs, out.last)
    }

    fn quick_cfg() -> DiagnosticsConfig {
        DiagnosticsConfig {
            w2_samples: 64,
            solver: OdeSolverConfig {
                n_steps: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn unsorted_losses_are_rejected() {
        let (pairs, m) = toy();
        let entries = [
            SweepEntry {
                budget: 1,
                train_loss: 2.0,
                models: &m,
            },
            SweepEntry {
                budget: 2,
                train_loss: 2.0,
                models: &m,
            },
        ];
        let err = fmrc_vs_operator_error_sweep(&pairs, &entries, &quick_cfg()).unwrap_err();
        assert!(matches!(err, DiagError::UnsortedSweep(1)));
    }

    #[test]
    fn diagnostics_are_reproducible_and_written() {
        let (pairs, m) = toy();
        let cfg = quick_cfg();
        let a = model_diagnostics(&pairs, &m, &cfg).unwrap();
        let b = model_diagnostics(&pairs, &m, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.forward.weak_error.is_finite() && a.w2_pairs > 0.0);
        let entries = [
            SweepEntry {
                budget: 10,
                train_loss: 3.0,
                models: &m,
            },
            SweepEntry {
                budget: 20,
                train_loss: 2.5,
                models: &m,
            },
        ];
        let rows = fmrc_vs_operator_error_sweep(&pairs, &entries, &cfg).unwrap();
        assert_eq!(rows[0].weak_error_forward, rows[1].weak_error_forward);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("budget,train_loss,weak_error_forward,weak_error_backward,w2_pairs\n")
        );
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (_, m) = toy();
        let pairs = TransitionPairSet::new(1, 1, vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(model_diagnostics(&pairs, &m, &quick_cfg()).is_err());
    }
}
