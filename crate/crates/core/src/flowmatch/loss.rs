use ndarray::{s, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::interpolant::{fourier_features, interpolate_rows};
use super::models::{gather, standardize, EncoderModel, FlowModels, VelocityFieldModel};
use super::FlowError;
use crate::dynamics::TransitionPairSet;
use crate::neural::{Gradients, Matrix, Tape, Var};
use crate::rng;

/// Tape model ids for parameter gradients.
pub const ENCODER_ID: usize = 0;
pub const V0_ID: usize = 1;
pub const V1_ID: usize = 2;

/// Per-element draws for one batch: `s_b ~ U(0,1)`, `x'_b, y'_b ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNoise {
    pub s: Vec<f64>,
    pub x_noise: Matrix,
    pub y_noise: Matrix,
}

impl LossNoise {
    pub fn draw<R: Rng + ?Sized>(r: &mut R, batch: usize, dim: usize) -> Self {
        let s = (0..batch).map(|_| r.random::<f64>()).collect();
        let mut xn = vec![0.0; batch * dim];
        let mut yn = vec![0.0; batch * dim];
        rng::fill_normal(r, &mut xn);
        rng::fill_normal(r, &mut yn);
        Self {
            s,
            x_noise: Matrix::from_shape_vec((batch, dim), xn).expect("shape"),
            y_noise: Matrix::from_shape_vec((batch, dim), yn).expect("shape"),
        }
    }

    pub fn from_seed(seed: u64, batch: usize, dim: usize) -> Self {
        Self::draw(&mut rng::stream(seed), batch, dim)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn rows(&self, lo: usize, hi: usize) -> Self {
        Self {
            s: self.s[lo..hi].to_vec(),
            x_noise: self.x_noise.slice(s![lo..hi, ..]).to_owned(),
            y_noise: self.y_noise.slice(s![lo..hi, ..]).to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SSampling {
    pub per_element: bool,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl SSampling {
    fn of(s: &[f64]) -> Self {
        let n = s.len().max(1) as f64;
        Self {
            per_element: true,
            min: s.iter().copied().fold(f64::INFINITY, f64::min),
            max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: s.iter().sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmrcLossReport {
    pub l0: f64,
    pub l1: f64,
    /// Always `l0 + l1`.
    pub total: f64,
    pub batch_size: usize,
    pub s_sampling: SSampling,
}

impl FmrcLossReport {
    pub fn new(l0: f64, l1: f64, batch_size: usize, s: &[f64]) -> Self {
        Self {
            l0,
            l1,
            total: l0 + l1,
            batch_size,
            s_sampling: SSampling::of(s),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l0.is_finite() && self.l1.is_finite()
    }
}

/// How `v0` and `v1` are conditioned.
pub enum Conditioning<'m> {
    /// `v0` sees `r(x)`, `v1` sees `r(y)`. The encoder receives the batch
    /// rows as given, so they must already be in its input standardization.
    Encoder {
        encoder: &'m EncoderModel,
        trainable: bool,
    },
    /// Precomputed condition rows for `v0` (`cx`) and `v1` (`cy`).
    Given { cx: Matrix, cy: Matrix },
    /// Condition on the raw partner state: `v0` sees `x`, `v1` sees `y`.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct LossGraph {
    pub l0: Var,
    pub l1: Var,
    pub objective: Var,
}

/// Record `L0` and `L1` for one batch on `tape`.
///
/// `objective = w0·L0 + w1·L1` is the node to differentiate. Velocity field
/// parameters are differentiable when `train_fields` is set.
#[allow(clippy::too_many_arguments)]
pub fn record_pair_loss<'a>(
    tape: &mut Tape<'a>,
    conditioning: Conditioning<'a>,
    v0: &'a VelocityFieldModel,
    v1: &'a VelocityFieldModel,
    x: &Matrix,
    y: &Matrix,
    noise: &LossNoise,
    train_fields: bool,
    weights: [f64; 2],
) -> Result<LossGraph, FlowError> {
    let (b, d) = x.dim();
    if b == 0 {
        return Err(FlowError::EmptyBatch);
    }
    for (what, got) in [
        ("batch y", y.dim()),
        ("x noise", noise.x_noise.dim()),
        ("y noise", noise.y_noise.dim()),
    ] {
        if got != (b, d) {
            return Err(FlowError::DimensionMismatch {
                what,
                expected: d,
                got: got.1,
            });
        }
    }
    if noise.len() != b {
        return Err(FlowError::DimensionMismatch {
            what: "noise batch",
            expected: b,
            got: noise.len(),
        });
    }
    for v in [v0, v1] {
        if v.state_dim != d {
            return Err(FlowError::DimensionMismatch {
                what: "velocity state",
                expected: v.state_dim,
                got: d,
            });
        }
    }

    let ys = interpolate_rows(&noise.s, &noise.y_noise, y);
    let xs = interpolate_rows(&noise.s, &noise.x_noise, x);
    let target0 = y - &noise.y_noise;
    let target1 = x - &noise.x_noise;

    let (c0, c1) = match conditioning {
        Conditioning::Encoder { encoder, trainable } => {
            if encoder.input_dim() != d {
                return Err(FlowError::DimensionMismatch {
                    what: "encoder input",
                    expected: encoder.input_dim(),
                    got: d,
                });
            }
            let id = trainable.then_some(ENCODER_ID);
            let cx = tape.constant(x.clone());
            let cy = tape.constant(y.clone());
            (
                encoder.net.forward_tape(tape, cx, id)?,
                encoder.net.forward_tape(tape, cy, id)?,
            )
        }
        Conditioning::Given { cx, cy } => {
            if cx.nrows() != b || cy.nrows() != b {
                return Err(FlowError::DimensionMismatch {
                    what: "condition rows",
                    expected: b,
                    got: cx.nrows().min(cy.nrows()),
                });
            }
            (tape.constant(cx), tape.constant(cy))
        }
        Conditioning::Full => (tape.constant(x.clone()), tape.constant(y.clone())),
    };
    for (v, c) in [(v0, c0), (v1, c1)] {
        if tape.value(c).ncols() != v.condition_dim {
            return Err(FlowError::DimensionMismatch {
                what: "velocity condition",
                expected: v.condition_dim,
                got: tape.value(c).ncols(),
            });
        }
    }

    let fid = |id| train_fields.then_some(id);
    let l0 = flow_term(tape, v0, &noise.s, ys, target0, c0, fid(V0_ID))?;
    let l1 = flow_term(tape, v1, &noise.s, xs, target1, c1, fid(V1_ID))?;
    let objective = if weights == [1.0, 1.0] {
        tape.add(l0, l1)?
    } else {
        let a = tape.scale(l0, weights[0]);
        let b = tape.scale(l1, weights[1]);
        tape.add(a, b)?
    };
    Ok(LossGraph { l0, l1, objective })
}

/// `mean_b ‖v(s_b, state_b, cond_b) − target_b‖²`.
pub(crate) fn flow_term<'a>(
    tape: &mut Tape<'a>,
    v: &'a VelocityFieldModel,
    s: &[f64],
    state: Matrix,
    target: Matrix,
    cond: Var,
    model: Option<usize>,
) -> Result<Var, FlowError> {
    let sf = tape.constant(fourier_features(s, v.s_features));
    let st = tape.constant(state);
    let out = v.tape_velocity(tape, sf, st, Some(cond), model)?;
    let tg = tape.constant(target);
    let r = tape.sub(out, tg)?;
    Ok(tape.mean_squared_norm(r))
}

fn finish(
    tape: &Tape<'_>,
    g: LossGraph,
    noise: &LossNoise,
) -> Result<(FmrcLossReport, Gradients), FlowError> {
    let report = FmrcLossReport::new(tape.scalar(g.l0), tape.scalar(g.l1), noise.len(), &noise.s);
    if !report.is_finite() {
        return Err(FlowError::NonFiniteLoss {
            l0: report.l0,
            l1: report.l1,
            batch_size: report.batch_size,
        });
    }
    Ok((report, tape.backward(g.objective)?))
}

/// Bottlenecked loss `L0 + L1` for one batch, with gradients for the
/// encoder ([`ENCODER_ID`]) and both fields ([`V0_ID`], [`V1_ID`]).
/// `x` and `y` are in the encoder's input standardization.
pub fn fmrc_minibatch_loss(
    encoder: &EncoderModel,
    v0: &VelocityFieldModel,
    v1: &VelocityFieldModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    noise_seed: u64,
) -> Result<(FmrcLossReport, Gradients), FlowError> {
    let noise = LossNoise::from_seed(noise_seed, x.nrows(), x.ncols());
    let (x, y) = (x.to_owned(), y.to_owned());
    let mut tape = Tape::new();
    let cond = Conditioning::Encoder {
        encoder,
        trainable: true,
    };
    let g = record_pair_loss(&mut tape, cond, v0, v1, &x, &y, &noise, true, [1.0, 1.0])?;
    finish(&tape, g, &noise)
}

/// Unbottlenecked baseline: `v0` conditioned on `x`, `v1` on `y`.
pub fn full_fm_minibatch_loss(
    v0: &VelocityFieldModel,
    v1: &VelocityFieldModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    noise_seed: u64,
) -> Result<(FmrcLossReport, Gradients), FlowError> {
    let noise = LossNoise::from_seed(noise_seed, x.nrows(), x.ncols());
    let (x, y) = (x.to_owned(), y.to_owned());
    let mut tape = Tape::new();
    let g = record_pair_loss(
        &mut tape,
        Conditioning::Full,
        v0,
        v1,
        &x,
        &y,
        &noise,
        true,
        [1.0, 1.0],
    )?;
    finish(&tape, g, &noise)
}

pub(crate) const EVAL_CHUNK: usize = 2048;

/// Forward-only loss over many rows with precomputed conditions, in chunks.
/// `cond = None` means full conditioning on the states.
pub(crate) fn chunked_loss(
    v0: &VelocityFieldModel,
    v1: &VelocityFieldModel,
    zx: &Matrix,
    zy: &Matrix,
    cond: Option<(&Matrix, &Matrix)>,
    noise: &LossNoise,
) -> Result<FmrcLossReport, FlowError> {
    let n = zx.nrows();
    let (mut a0, mut a1) = (0.0, 0.0);
    let mut lo = 0;
    while lo < n {
        let hi = (lo + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (lo..hi).collect();
        let nz = noise.rows(lo, hi);
        let conditioning = match cond {
            Some((cx, cy)) => Conditioning::Given {
                cx: gather(cx, &idx),
                cy: gather(cy, &idx),
            },
            None => Conditioning::Full,
        };
        let mut tape = Tape::new();
        let g = record_pair_loss(
            &mut tape,
            conditioning,
            v0,
            v1,
            &gather(zx, &idx),
            &gather(zy, &idx),
            &nz,
            false,
            [1.0, 1.0],
        )?;
        let w = (hi - lo) as f64;
        a0 += w * tape.scalar(g.l0);
        a1 += w * tape.scalar(g.l1);
        lo = hi;
    }
    let n_f = n.max(1) as f64;
    Ok(FmrcLossReport::new(a0 / n_f, a1 / n_f, n, &noise.s))
}

/// Mean `L0`, `L1` of trained models over a whole pair set, with noise drawn
/// from `noise_seed` (the same seed gives common random numbers across
/// model sets).
pub fn evaluate_loss(
    models: &FlowModels,
    pairs: &TransitionPairSet,
    noise_seed: u64,
) -> Result<FmrcLossReport, FlowError> {
    let n = pairs.len();
    let d = pairs.dim;
    if d != models.dim() {
        return Err(FlowError::DimensionMismatch {
            what: "pair dimension",
            expected: models.dim(),
            got: d,
        });
    }
    let x = Matrix::from_shape_vec((n, d), pairs.x.clone()).expect("shape");
    let y = Matrix::from_shape_vec((n, d), pairs.y.clone()).expect("shape");
    let zx = standardize(&models.normalization, x.view());
    let zy = standardize(&models.normalization, y.view());
    let noise = LossNoise::from_seed(noise_seed, n, d);
    match &models.encoder {
        Some(e) => {
            let cx = e.raw(x.view())?;
            let cy = e.raw(y.view())?;
            chunked_loss(&models.v0, &models.v1, &zx, &zy, Some((&cx, &cy)), &noise)
        }
        None => chunked_loss(&models.v0, &models.v1, &zx, &zy, None, &noise),
    }
}
