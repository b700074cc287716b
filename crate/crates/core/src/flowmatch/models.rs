use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::interpolant::fourier_features;
use super::sampler::{sample_flow_batch, OdeSolverConfig};
use super::FlowError;
use crate::dynamics::Standardization;
use crate::neural::checkpoint::{read_checkpoint, write_checkpoint};
use crate::neural::{Activation, Matrix, Mlp, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `v0`: state is `y`, condition comes from `x`.
    Forward,
    /// `v1`: state is `x`, condition comes from `y`.
    Backward,
}

/// Conditional velocity field `v(s, state, condition)`.
///
/// Network input is `[fourier(s) | state | condition]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldModel {
    pub net: Mlp,
    pub state_dim: usize,
    pub condition_dim: usize,
    pub direction: Direction,
    pub s_features: usize,
}

impl VelocityFieldModel {
    pub fn input_width(state_dim: usize, condition_dim: usize, s_features: usize) -> usize {
        2 * s_features + state_dim + condition_dim
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        condition_dim: usize,
        direction: Direction,
        hidden: &[usize],
        s_features: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self, FlowError> {
        let mut sizes = vec![Self::input_width(state_dim, condition_dim, s_features)];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let net = Mlp::new(&sizes, activation, seed)?;
        Self::from_net(net, state_dim, condition_dim, direction, s_features)
    }

    pub fn from_net(
        net: Mlp,
        state_dim: usize,
        condition_dim: usize,
        direction: Direction,
        s_features: usize,
    ) -> Result<Self, FlowError> {
        let width = Self::input_width(state_dim, condition_dim, s_features);
        if net.input_dim() != width {
            return Err(FlowError::DimensionMismatch {
                what: "velocity network input",
                expected: width,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != state_dim {
            return Err(FlowError::DimensionMismatch {
                what: "velocity network output",
                expected: state_dim,
                got: net.output_dim(),
            });
        }
        Ok(Self {
            net,
            state_dim,
            condition_dim,
            direction,
            s_features,
        })
    }

    fn check(
        &self,
        rows: usize,
        state: ArrayView2<f64>,
        cond: ArrayView2<f64>,
    ) -> Result<(), FlowError> {
        if state.ncols() != self.state_dim {
            return Err(FlowError::DimensionMismatch {
                what: "velocity state",
                expected: self.state_dim,
                got: state.ncols(),
            });
        }
        if cond.ncols() != self.condition_dim {
            return Err(FlowError::DimensionMismatch {
                what: "velocity condition",
                expected: self.condition_dim,
                got: cond.ncols(),
            });
        }
        if state.nrows() != rows || cond.nrows() != rows {
            return Err(FlowError::DimensionMismatch {
                what: "velocity batch rows",
                expected: rows,
                got: state.nrows().min(cond.nrows()),
            });
        }
        Ok(())
    }

    /// `v(s_b, state_b, cond_b)` for every row `b`.
    pub fn velocity(
        &self,
        s: &[f64],
        state: ArrayView2<f64>,
        cond: ArrayView2<f64>,
    ) -> Result<Matrix, FlowError> {
        self.check(s.len(), state, cond)?;
        let tf = fourier_features(s, self.s_features);
        let input = concatenate(Axis(1), &[tf.view(), state, cond]).expect("row counts checked");
        Ok(self.net.forward(input.view())?)
    }

    /// Record `v` on a tape. `s_feat` must come from [`fourier_features`] with
    /// this model's `s_features`.
    pub fn tape_velocity<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        s_feat: Var,
        state: Var,
        cond: Option<Var>,
        model: Option<usize>,
    ) -> Result<Var, FlowError> {
        let input = match cond {
            Some(c) if self.condition_dim > 0 => tape.concat(&[s_feat, state, c])?,
            _ => tape.concat(&[s_feat, state])?,
        };
        if tape.value(input).ncols() != self.net.input_dim() {
            return Err(FlowError::DimensionMismatch {
                what: "velocity network input",
                expected: self.net.input_dim(),
                got: tape.value(input).ncols(),
            });
        }
        Ok(self.net.forward_tape(tape, input, model)?)
    }

    pub fn write_checkpoint<W: Write>(
        &self,
        w: &mut W,
        extra: serde_json::Value,
    ) -> Result<(), FlowError> {
        let meta = json!({
            "role": "velocity",
            "direction": self.direction,
            "state_dim": self.state_dim,
            "condition_dim": self.condition_dim,
            "s_features": self.s_features,
            "training": extra,
        });
        Ok(write_checkpoint(w, &self.net, meta)?)
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self, FlowError> {
        let (net, header) = read_checkpoint(r)?;
        let m = &header.metadata;
        if m["role"] != "velocity" {
            return Err(FlowError::Manifest(
                "checkpoint is not a velocity field".into(),
            ));
        }
        let get = |k: &str| {
            m[k].as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| FlowError::Manifest(format!("velocity checkpoint lacks `{k}`")))
        };
        let direction: Direction = serde_json::from_value(m["direction"].clone())
            .map_err(|e| FlowError::Manifest(format!("direction: {e}")))?;
        Self::from_net(
            net,
            get("state_dim")?,
            get("condition_dim")?,
            direction,
            get("s_features")?,
        )
    }
}

/// Reaction-coordinate network `r: R^D -> R^d`.
///
/// The network acts on inputs standardized by `input_norm`. Its raw output
/// is what the velocity fields are conditioned on; `output_norm` (fixed after
/// training) maps raw output to zero mean and unit variance for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub net: Mlp,
    pub input_norm: Standardization,
    pub output_norm: Standardization,
}

impl EncoderModel {
    pub fn new(
        input_dim: usize,
        rc_dim: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
        input_norm: Standardization,
    ) -> Result<Self, FlowError> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(rc_dim);
        Self::from_net(
            Mlp::new(&sizes, activation, seed)?,
            input_norm,
            Standardization::identity(rc_dim),
        )
    }

    pub fn from_net(
        net: Mlp,
        input_norm: Standardization,
        output_norm: Standardization,
    ) -> Result<Self, FlowError> {
        let (d_in, d_out) = (net.input_dim(), net.output_dim());
        if d_out >= d_in {
            return Err(FlowError::BadBottleneck {
                rc_dim: d_out,
                dim: d_in,
            });
        }
        if input_norm.dim() != d_in || output_norm.dim() != d_out {
            return Err(FlowError::DimensionMismatch {
                what: "encoder normalization",
                expected: d_in,
                got: input_norm.dim(),
            });
        }
        Ok(Self {
            net,
            input_norm,
            output_norm,
        })
    }

    /// The linear RC `r(x) = (x_coord - mean) / std`.
    pub fn coordinate(
        input_dim: usize,
        coord: usize,
        input_norm: Standardization,
    ) -> Result<Self, FlowError> {
        if coord >= input_dim {
            return Err(FlowError::InvalidConfig(format!(
                "coordinate {coord} out of range"
            )));
        }
        let mut net = Mlp::zeros(&[input_dim, 1], Activation::Tanh)?;
        net.weights[0][[coord, 0]] = 1.0;
        Self::from_net(net, input_norm, Standardization::identity(1))
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn rc_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Raw network output on physical-unit points.
    pub fn raw(&self, points: ArrayView2<f64>) -> Result<Matrix, FlowError> {
        if points.ncols() != self.input_dim() {
            return Err(FlowError::DimensionMismatch {
                what: "encoder input",
                expected: self.input_dim(),
                got: points.ncols(),
            });
        }
        let z = standardize(&self.input_norm, points);
        Ok(self.net.forward(z.view())?)
    }

    /// `r` applied rowwise with the stored output standardization.
    pub fn evaluate_rc(&self, points: ArrayView2<f64>) -> Result<Matrix, FlowError> {
        let raw = self.raw(points)?;
        Ok(standardize(&self.output_norm, raw.view()))
    }

    /// Freeze the output standardization from raw outputs on `points`.
    /// Constant output coordinates keep unit scale.
    pub fn fit_output_norm(&mut self, points: ArrayView2<f64>) -> Result<(), FlowError> {
        let raw = self.raw(points)?;
        let mut norm =
            Standardization::fit(raw.as_slice().expect("standard layout"), self.rc_dim());
        for s in &mut norm.std {
            if !(*s > 0.0) || !s.is_finite() {
                *s = 1.0;
            }
        }
        self.output_norm = norm;
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(
        &self,
        w: &mut W,
        extra: serde_json::Value,
    ) -> Result<(), FlowError> {
        let meta = json!({
            "role": "encoder",
            "input_norm": self.input_norm,
            "output_norm": self.output_norm,
            "training": extra,
        });
        Ok(write_checkpoint(w, &self.net, meta)?)
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self, FlowError> {
        let (net, header) = read_checkpoint(r)?;
        let m = &header.metadata;
        if m["role"] != "encoder" {
            return Err(FlowError::Manifest("checkpoint is not an encoder".into()));
        }
        let norm = |k: &str| -> Result<Standardization, FlowError> {
            serde_json::from_value(m[k].clone())
                .map_err(|e| FlowError::Manifest(format!("{k}: {e}")))
        };
        Self::from_net(net, norm("input_norm")?, norm("output_norm")?)
    }

    pub fn load(path: &Path) -> Result<Self, FlowError> {
        Self::read_checkpoint(&mut BufReader::new(File::open(path)?))
    }
}

pub(crate) fn standardize(norm: &Standardization, points: ArrayView2<f64>) -> Matrix {
    let mut out = points.to_owned();
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - norm.mean[j]) / norm.std[j];
        }
    }
    out
}

pub(crate) fn unstandardize(norm: &Standardization, points: ArrayView2<f64>) -> Matrix {
    let mut out = points.to_owned();
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * norm.std[j] + norm.mean[j];
        }
    }
    out
}

/// A trained set: optional encoder, both velocity fields and the dataset
/// standardization the fields operate in.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModels {
    pub encoder: Option<EncoderModel>,
    pub v0: VelocityFieldModel,
    pub v1: VelocityFieldModel,
    pub normalization: Standardization,
}

impl FlowModels {
    pub fn dim(&self) -> usize {
        self.normalization.dim()
    }

    /// Conditioning values for physical-unit points: raw encoder output, or
    /// the standardized points themselves when no encoder is present.
    pub fn condition(&self, points: ArrayView2<f64>) -> Result<Matrix, FlowError> {
        match &self.encoder {
            Some(e) => e.raw(points),
            None => {
                if points.ncols() != self.dim() {
                    return Err(FlowError::DimensionMismatch {
                        what: "condition points",
                        expected: self.dim(),
                        got: points.ncols(),
                    });
                }
                Ok(standardize(&self.normalization, points))
            }
        }
    }

    /// One generated partner per input row, in physical units: `Forward`
    /// draws `ŷ ~ p(· | r(x))` with `v0`, `Backward` draws `x̂` with `v1`.
    pub fn generate(
        &self,
        direction: Direction,
        points: ArrayView2<f64>,
        solver: &OdeSolverConfig,
    ) -> Result<Matrix, FlowError> {
        let cond = self.condition(points)?;
        let field = match direction {
            Direction::Forward => &self.v0,
            Direction::Backward => &self.v1,
        };
        let z = sample_flow_batch(field, cond.view(), solver)?;
        Ok(unstandardize(&self.normalization, z.view()))
    }

    /// Write one checkpoint per model plus `manifest.json` into `dir`.
    pub fn save(
        &self,
        dir: &Path,
        manifest: &mut ModelManifest,
        extra: serde_json::Value,
    ) -> Result<(), FlowError> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str,
                     f: &dyn Fn(&mut BufWriter<File>) -> Result<(), FlowError>|
         -> Result<(), FlowError> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        };
        if let Some(e) = &self.encoder {
            let name = manifest
                .encoder
                .clone()
                .unwrap_or_else(|| "encoder.ckpt".into());
            write(&name, &|w| e.write_checkpoint(w, extra.clone()))?;
            manifest.encoder = Some(name);
        } else {
            manifest.encoder = None;
        }
        write(&manifest.v0, &|w| {
            self.v0.write_checkpoint(w, extra.clone())
        })?;
        write(&manifest.v1, &|w| {
            self.v1.write_checkpoint(w, extra.clone())
        })?;
        manifest.normalization = self.normalization.clone();
        manifest.write(&dir.join("manifest.json"))
    }

    /// Load the models referenced by a manifest; paths are relative to the
    /// manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<(Self, ModelManifest), FlowError> {
        let manifest = ModelManifest::read(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let open = |name: &str| -> Result<BufReader<File>, FlowError> {
            Ok(BufReader::new(File::open(dir.join(name))?))
        };
        let encoder = match &manifest.encoder {
            Some(name) => Some(EncoderModel::read_checkpoint(&mut open(name)?)?),
            None => None,
        };
        let v0 = VelocityFieldModel::read_checkpoint(&mut open(&manifest.v0)?)?;
        let v1 = VelocityFieldModel::read_checkpoint(&mut open(&manifest.v1)?)?;
        let models = Self {
            encoder,
            v0,
            v1,
            normalization: manifest.normalization.clone(),
        };
        Ok((models, manifest))
    }
}

/// Ties the checkpoints of one trained model set to the dataset it was
/// trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub mode: String,
    pub encoder: Option<String>,
    pub v0: String,
    pub v1: String,
    pub dataset_hash: String,
    pub dim: usize,
    pub lag_steps: usize,
    pub normalization: Standardization,
    pub final_validation_loss: Option<f64>,
    pub best_validation_loss: Option<f64>,
    pub best_iteration: Option<usize>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ModelManifest {
    pub fn new(mode: &str, dataset_hash: &str, dim: usize, lag_steps: usize) -> Self {
        Self {
            format: "fmrc-manifest".into(),
            version: 1,
            mode: mode.into(),
            encoder: None,
            v0: "v0.ckpt".into(),
            v1: "v1.ckpt".into(),
            dataset_hash: dataset_hash.into(),
            dim,
            lag_steps,
            normalization: Standardization::identity(dim),
            final_validation_loss: None,
            best_validation_loss: None,
            best_iteration: None,
            metadata: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), FlowError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| FlowError::Manifest(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, FlowError> {
        let text = std::fs::read_to_string(path)?;
        let m: Self =
            serde_json::from_str(&text).map_err(|e| FlowError::Manifest(e.to_string()))?;
        if m.format != "fmrc-manifest" || m.version != 1 {
            return Err(FlowError::Manifest(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

/// Gather rows `idx` of `m`.
pub(crate) fn gather(m: &Array2<f64>, idx: &[usize]) -> Matrix {
    m.select(Axis(0), idx)
}
