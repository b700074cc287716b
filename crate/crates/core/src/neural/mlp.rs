use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tape::{Matrix, ParamKey, Tape, Var};
use super::NeuralError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - 2.0 / ((2.0 * x).exp() + 1.0),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    /// `E[φ(z)²]` for `z ~ N(0, 1)`.
    pub fn second_moment(self) -> f64 {
        match self {
            Activation::Tanh => 0.394_294_490_394_587_7,
            Activation::Silu => 0.355_775_519_814_416_35,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        }
    }
}

impl FromStr for Activation {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "silu" => Ok(Activation::Silu),
            other => Err(NeuralError::UnsupportedPrimitive(other.to_string())),
        }
    }
}

/// Feed-forward network with activations on hidden layers and an affine
/// output layer.
///
/// Layer `l` maps a row batch as `h ↦ h·W_l + b_l` with `W_l` of shape
/// `fan_in × fan_out` and `b_l` of shape `1 × fan_out`. The flat parameter
/// ordering is: layers in order, each layer's weights row-major then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
    pub init_seed: u64,
}

impl Mlp {
    /// Hidden-layer weights `~ N(0, 1/fan_in)`, biases zero. The output layer
    /// is additionally scaled by `1/E[φ(z)²]` so a fresh net does not shrink
    /// its output variance by the activation's contraction.
    pub fn new(
        layer_sizes: &[usize],
        activation: Activation,
        init_seed: u64,
    ) -> Result<Self, NeuralError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NeuralError::BadArchitecture(layer_sizes.to_vec()));
        }
        let mut r = rng::stream(init_seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let n_layers = layer_sizes.len() - 1;
        for (l, w) in layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut var = 1.0 / fan_in as f64;
            if l + 1 == n_layers && n_layers > 1 {
                var /= activation.second_moment();
            }
            let sd = var.sqrt();
            let mut buf = vec![0.0; fan_in * fan_out];
            rng::fill_normal(&mut r, &mut buf);
            buf.iter_mut().for_each(|v| *v *= sd);
            weights.push(Array2::from_shape_vec((fan_in, fan_out), buf).expect("shape"));
            biases.push(Matrix::zeros((1, fan_out)));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
            init_seed,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self, NeuralError> {
        let mut m = Self::new(layer_sizes, activation, 0)?;
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Matrix, NeuralError> {
        if x.ncols() != self.input_dim() {
            return Err(NeuralError::WidthMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteInput);
        }
        let last = self.n_layers() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 0..=last {
            if l > 0 {
                h = h.dot(&self.weights[l]) + &self.biases[l];
            }
            if l < last {
                h.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        Ok(h)
    }

    /// Record the forward pass on `tape`. With `model = Some(id)` the
    /// parameters are differentiable leaves keyed by `id`; with `None` they
    /// enter as constants.
    pub fn forward_tape<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        input: Var,
        model: Option<usize>,
    ) -> Result<Var, NeuralError> {
        let last = self.n_layers() - 1;
        let mut h = input;
        for l in 0..=last {
            let (w, b) = match model {
                Some(id) => (
                    tape.param(
                        ParamKey {
                            model: id,
                            tensor: 2 * l,
                        },
                        &self.weights[l],
                    ),
                    tape.param(
                        ParamKey {
                            model: id,
                            tensor: 2 * l + 1,
                        },
                        &self.biases[l],
                    ),
                ),
                None => (
                    tape.constant_ref(&self.weights[l]),
                    tape.constant_ref(&self.biases[l]),
                ),
            };
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            if l < last {
                h = tape.activation(h, self.activation);
            }
        }
        Ok(h)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        if flat.len() != self.num_params() {
            return Err(NeuralError::ParamCount {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Flatten gradients for model `id` in parameter order; missing tensors are zero.
    pub fn flat_gradient(&self, grads: &super::Gradients, id: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in 0..self.n_layers() {
            for (t, shape) in [
                (2 * l, self.weights[l].dim()),
                (2 * l + 1, self.biases[l].dim()),
            ] {
                match grads.get(ParamKey {
                    model: id,
                    tensor: t,
                }) {
                    Some(g) => out.extend(g.iter()),
                    None => out.extend(std::iter::repeat_n(0.0, shape.0 * shape.1)),
                }
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}
