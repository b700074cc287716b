use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{
    chunked_loss, flow_term, record_pair_loss, Conditioning, LossNoise, ENCODER_ID, V0_ID, V1_ID,
};
use super::models::{gather, standardize, Direction, EncoderModel, FlowModels, VelocityFieldModel};
use super::FlowError;
use crate::dynamics::TransitionPairSet;
use crate::neural::{Activation, Matrix, Mlp, Optimizer, OptimizerConfig, Tape};
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub rc_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub encoder_activation: Activation,
    pub velocity_hidden: Vec<usize>,
    pub velocity_activation: Activation,
    /// Number of Fourier frequencies for `s` (each contributes sin and cos).
    pub s_features: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            rc_dim: 1,
            encoder_hidden: vec![64, 64],
            encoder_activation: Activation::Tanh,
            velocity_hidden: vec![128, 128],
            velocity_activation: Activation::Silu,
            s_features: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Learning rate at the last iteration as a fraction of the initial one
    /// (cosine schedule); 1 keeps it constant.
    pub lr_final_fraction: f64,
    pub validation_fraction: f64,
    /// Cap on held-out rows used to evaluate the validation loss.
    pub validation_max_rows: usize,
    pub eval_every: usize,
    pub loss_weights: [f64; 2],
    /// Exponential smoothing factor for the reported training loss.
    pub smoothing: f64,
    pub max_nonfinite_batches: usize,
    pub seed: u64,
    pub architecture: ArchitectureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 512,
            optimizer: OptimizerConfig::default(),
            lr_final_fraction: 0.01,
            validation_fraction: 0.1,
            validation_max_rows: 8192,
            eval_every: 250,
            loss_weights: [1.0, 1.0],
            smoothing: 0.01,
            max_nonfinite_batches: 5,
            seed: 0,
            architecture: ArchitectureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("training.batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("training.validation_fraction must lie in [0, 1)");
        }
        if self.eval_every == 0 {
            return bad("training.eval_every must be at least 1");
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return bad("training.smoothing must lie in (0, 1]");
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return bad("training.lr_final_fraction must lie in (0, 1]");
        }
        if self
            .loss_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("training.loss_weights must be finite and nonnegative");
        }
        if self.max_nonfinite_batches == 0 {
            return bad("training.max_nonfinite_batches must be at least 1");
        }
        if self.optimizer.learning_rate() <= 0.0 {
            return bad("training.optimizer.lr must be positive");
        }
        let a = &self.architecture;
        if a.rc_dim == 0 || a.s_features == 0 {
            return bad("architecture.rc_dim and architecture.s_features must be at least 1");
        }
        Ok(())
    }

    fn learning_rate_at(&self, it: usize) -> f64 {
        let lr = self.optimizer.learning_rate();
        if self.lr_final_fraction >= 1.0 || self.iterations <= 1 {
            return lr;
        }
        let t = it as f64 / (self.iterations - 1) as f64;
        let f = self.lr_final_fraction;
        lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }
}

pub enum TrainMode {
    /// Encoder and both fields trained jointly.
    Fmrc,
    /// Fields conditioned on the full partner state; no encoder.
    Full,
    /// The supplied encoder is frozen; only the fields train.
    FixedEncoder(EncoderModel),
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Fmrc => "fmrc",
            TrainMode::Full => "full",
            TrainMode::FixedEncoder(_) => "assess",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// Number of completed updates.
    pub iteration: usize,
    pub l0: f64,
    pub l1: f64,
    pub total: f64,
    pub smoothed_total: f64,
    pub validation_total: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation loss (the final models when no
    /// validation was run).
    pub best: FlowModels,
    pub last: FlowModels,
    pub history: Vec<LossRecord>,
    pub best_iteration: Option<usize>,
    pub best_validation: Option<f64>,
    pub final_validation: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

struct Data {
    zx: Matrix,
    zy: Matrix,
    /// Precomputed conditions for a frozen encoder.
    frozen: Option<(Matrix, Matrix)>,
}

fn rows(buf: &[f64], dim: usize) -> Matrix {
    Array2::from_shape_vec((buf.len() / dim, dim), buf.to_vec()).expect("shape")
}

fn update(
    net: &mut Mlp,
    opt: &mut Optimizer,
    grads: &crate::neural::Gradients,
    id: usize,
    it: usize,
) -> Result<(), FlowError> {
    let g = net.flat_gradient(grads, id);
    let mut p = net.flat_params();
    opt.step(&mut p, &g)
        .map_err(|_| FlowError::NonFiniteGradient { iteration: it })?;
    net.set_flat_params(&p)?;
    Ok(())
}

/// Minimize `w0·L0 + w1·L1` over the mode's trainable models.
///
/// Pairs are standardized with the dataset's stored statistics. A fixed
/// held-out split and fixed validation noise make validation losses
/// comparable across iterations and across runs with the same seed.
pub fn train(
    dataset: &TransitionPairSet,
    mode: TrainMode,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, FlowError> {
    cfg.validate()?;
    let d = dataset.dim;
    let n = dataset.len();
    if n < 2 {
        return Err(FlowError::InvalidConfig(
            "training needs at least 2 pairs".into(),
        ));
    }
    let arch = &cfg.architecture;
    let norm = dataset.normalization.clone();
    let raw_x = rows(&dataset.x, d);
    let raw_y = rows(&dataset.y, d);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(derive_seed(cfg.seed, "split")));
    let n_val = ((n as f64 * cfg.validation_fraction).floor() as usize).min(n - 1);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let val_eval = &val_idx[..n_val.min(cfg.validation_max_rows)];

    let (mut encoder, trainable_encoder, cdim, frozen) = match mode {
        TrainMode::Fmrc => {
            if arch.rc_dim >= d {
                return Err(FlowError::BadBottleneck {
                    rc_dim: arch.rc_dim,
                    dim: d,
                });
            }
            let e = EncoderModel::new(
                d,
                arch.rc_dim,
                &arch.encoder_hidden,
                arch.encoder_activation,
                derive_seed(cfg.seed, "init-encoder"),
                norm.clone(),
            )?;
            (Some(e), true, arch.rc_dim, None)
        }
        TrainMode::Full => (None, false, d, None),
        TrainMode::FixedEncoder(e) => {
            if e.input_dim() != d {
                return Err(FlowError::DimensionMismatch {
                    what: "encoder input",
                    expected: d,
                    got: e.input_dim(),
                });
            }
            let c = (e.raw(raw_x.view())?, e.raw(raw_y.view())?);
            let k = e.rc_dim();
            (Some(e), false, k, Some(c))
        }
    };
    let data = Data {
        zx: standardize(&norm, raw_x.view()),
        zy: standardize(&norm, raw_y.view()),
        frozen,
    };
    let field = |dir, label| {
        VelocityFieldModel::new(
            d,
            cdim,
            dir,
            &arch.velocity_hidden,
            arch.s_features,
            arch.velocity_activation,
            derive_seed(cfg.seed, label),
        )
    };
    let mut v0 = field(Direction::Forward, "init-v0")?;
    let mut v1 = field(Direction::Backward, "init-v1")?;

    let mut enc_opt = encoder
        .as_ref()
        .map(|e| cfg.optimizer.build(e.net.num_params()));
    let mut v0_opt = cfg.optimizer.build(v0.net.num_params());
    let mut v1_opt = cfg.optimizer.build(v1.net.num_params());

    let val_noise =
        LossNoise::from_seed(derive_seed(cfg.seed, "validation-noise"), val_eval.len(), d);
    let val_x = gather(&data.zx, val_eval);
    let val_y = gather(&data.zy, val_eval);
    let val_frozen = data
        .frozen
        .as_ref()
        .map(|(cx, cy)| (gather(cx, val_eval), gather(cy, val_eval)));
    let validate = |enc: &Option<EncoderModel>,
                    v0: &VelocityFieldModel,
                    v1: &VelocityFieldModel|
     -> Result<Option<f64>, FlowError> {
        if val_eval.is_empty() {
            return Ok(None);
        }
        let rep = match (&val_frozen, enc) {
            (Some((cx, cy)), _) => {
                chunked_loss(v0, v1, &val_x, &val_y, Some((cx, cy)), &val_noise)?
            }
            (None, Some(e)) => {
                let cx = e.net.forward(val_x.view())?;
                let cy = e.net.forward(val_y.view())?;
                chunked_loss(v0, v1, &val_x, &val_y, Some((&cx, &cy)), &val_noise)?
            }
            (None, None) => chunked_loss(v0, v1, &val_x, &val_y, None, &val_noise)?,
        };
        Ok(Some(rep.total))
    };

    let mut batch_rng = rng::stream(derive_seed(cfg.seed, "batches"));
    let mut noise_rng = rng::stream(derive_seed(cfg.seed, "noise"));
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut smoothed: Option<f64> = None;
    let mut nonfinite = 0usize;
    let mut best: Option<(
        f64,
        usize,
        Option<EncoderModel>,
        VelocityFieldModel,
        VelocityFieldModel,
    )> = None;
    let mut final_validation = None;
    let b = cfg.batch_size;

    for it in 0..cfg.iterations {
        let idx: Vec<usize> = (0..b)
            .map(|_| train_idx[batch_rng.random_range(0..train_idx.len())])
            .collect();
        let bx = gather(&data.zx, &idx);
        let by = gather(&data.zy, &idx);
        let noise = LossNoise::draw(&mut noise_rng, b, d);

        let (l0, l1, grads) = {
            let mut tape = Tape::new();
            let conditioning = match (&data.frozen, &encoder) {
                (Some((cx, cy)), _) => Conditioning::Given {
                    cx: gather(cx, &idx),
                    cy: gather(cy, &idx),
                },
                (None, Some(e)) => Conditioning::Encoder {
                    encoder: e,
                    trainable: trainable_encoder,
                },
                (None, None) => Conditioning::Full,
            };
            let g = record_pair_loss(
                &mut tape,
                conditioning,
                &v0,
                &v1,
                &bx,
                &by,
                &noise,
                true,
                cfg.loss_weights,
            )?;
            let (l0, l1) = (tape.scalar(g.l0), tape.scalar(g.l1));
            if !(l0.is_finite() && l1.is_finite()) {
                (l0, l1, None)
            } else {
                (l0, l1, Some(tape.backward(g.objective)?))
            }
        };
        let Some(grads) = grads else {
            nonfinite += 1;
            log::warn!("non-finite loss at iteration {it} (l0 = {l0}, l1 = {l1})");
            if nonfinite >= cfg.max_nonfinite_batches {
                return Err(FlowError::Diverged {
                    iteration: it,
                    consecutive: nonfinite,
                    l0,
                    l1,
                });
            }
            continue;
        };
        nonfinite = 0;
        if !grads.all_finite() {
            return Err(FlowError::NonFiniteGradient { iteration: it });
        }

        let lr = cfg.learning_rate_at(it);
        if let (Some(e), Some(opt)) = (
            encoder.as_mut().filter(|_| trainable_encoder),
            enc_opt.as_mut(),
        ) {
            opt.set_learning_rate(lr);
            update(&mut e.net, opt, &grads, ENCODER_ID, it)?;
        }
        v0_opt.set_learning_rate(lr);
        v1_opt.set_learning_rate(lr);
        update(&mut v0.net, &mut v0_opt, &grads, V0_ID, it)?;
        update(&mut v1.net, &mut v1_opt, &grads, V1_ID, it)?;

        let total = l0 + l1;
        let sm = match smoothed {
            None => total,
            Some(prev) => prev + cfg.smoothing * (total - prev),
        };
        smoothed = Some(sm);

        let done = it + 1;
        let validation_total = if done % cfg.eval_every == 0 || done == cfg.iterations {
            let v = validate(&encoder, &v0, &v1)?;
            if let Some(v) = v {
                final_validation = Some(v);
                if best.as_ref().is_none_or(|bst| v < bst.0) {
                    best = Some((v, done, encoder.clone(), v0.clone(), v1.clone()));
                }
                log::info!("iteration {done}: train {sm:.5} validation {v:.5}");
            }
            v
        } else {
            None
        };
        history.push(LossRecord {
            iteration: done,
            l0,
            l1,
            total,
            smoothed_total: sm,
            validation_total,
        });
    }

    let train_raw = gather(&raw_x, train_idx);
    let finish = |mut enc: Option<EncoderModel>,
                  v0: VelocityFieldModel,
                  v1: VelocityFieldModel|
     -> Result<FlowModels, FlowError> {
        if trainable_encoder {
            if let Some(e) = enc.as_mut() {
                e.fit_output_norm(train_raw.view())?;
            }
        }
        Ok(FlowModels {
            encoder: enc,
            v0,
            v1,
            normalization: norm.clone(),
        })
    };
    let (best_models, best_iteration, best_validation) = match best {
        Some((v, i, e, a, b)) => (finish(e, a, b)?, Some(i), Some(v)),
        None => (finish(encoder.clone(), v0.clone(), v1.clone())?, None, None),
    };
    let last = finish(encoder, v0, v1)?;
    Ok(TrainOutcome {
        best: best_models,
        last,
        history,
        best_iteration,
        best_validation,
        final_validation,
        n_train: train_idx.len(),
        n_validation: n_val,
    })
}

/// Fit an unconditional field transporting `N(0, I)` to the empirical
/// distribution of `samples` (rows, physical units).
pub fn train_marginal_flow(
    samples: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(VelocityFieldModel, Vec<LossRecord>), FlowError> {
    cfg.validate()?;
    let (n, d) = samples.dim();
    if n == 0 {
        return Err(FlowError::EmptyBatch);
    }
    let arch = &cfg.architecture;
    let mut v = VelocityFieldModel::new(
        d,
        0,
        Direction::Forward,
        &arch.velocity_hidden,
        arch.s_features,
        arch.velocity_activation,
        derive_seed(cfg.seed, "init-v0"),
    )?;
    let mut opt = cfg.optimizer.build(v.net.num_params());
    let data = samples.to_owned();
    let mut batch_rng = rng::stream(derive_seed(cfg.seed, "batches"));
    let mut noise_rng = rng::stream(derive_seed(cfg.seed, "noise"));
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut smoothed: Option<f64> = None;
    let b = cfg.batch_size;
    for it in 0..cfg.iterations {
        let idx: Vec<usize> = (0..b).map(|_| batch_rng.random_range(0..n)).collect();
        let y = gather(&data, &idx);
        let noise = LossNoise::draw(&mut noise_rng, b, d);
        let (loss, grads) = {
            let mut tape = Tape::new();
            let state = super::interpolant::interpolate_rows(&noise.s, &noise.y_noise, &y);
            let target = &y - &noise.y_noise;
            let empty = tape.constant(Matrix::zeros((b, 0)));
            let l = flow_term(&mut tape, &v, &noise.s, state, target, empty, Some(V0_ID))?;
            let loss = tape.scalar(l);
            if !loss.is_finite() {
                return Err(FlowError::Diverged {
                    iteration: it,
                    consecutive: 1,
                    l0: loss,
                    l1: 0.0,
                });
            }
            (loss, tape.backward(l)?)
        };
        opt.set_learning_rate(cfg.learning_rate_at(it));
        update(&mut v.net, &mut opt, &grads, V0_ID, it)?;
        let sm = smoothed.map_or(loss, |p| p + cfg.smoothing * (loss - p));
        smoothed = Some(sm);
        history.push(LossRecord {
            iteration: it + 1,
            l0: loss,
            l1: 0.0,
            total: loss,
            smoothed_total: sm,
            validation_total: None,
        });
    }
    Ok((v, history))
}

/// CSV with columns `iteration,l0,l1,total,validation_total`; the last is
/// empty where no validation ran.
pub fn write_history_csv<W: Write>(w: &mut W, history: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "iteration,l0,l1,total,validation_total")?;
    for r in history {
        match r.validation_total {
            Some(v) => writeln!(w, "{},{},{},{},{}", r.iteration, r.l0, r.l1, r.total, v)?,
            None => writeln!(w, "{},{},{},{},", r.iteration, r.l0, r.l1, r.total)?,
        }
    }
    Ok(())
}
