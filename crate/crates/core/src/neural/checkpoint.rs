//! Model checkpoints: `u64` header length, JSON header, then the flat
//! parameter block as little-endian `f64` (layers in order; each layer's
//! `fan_in × fan_out` weights row-major, then its bias).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, NeuralError};

pub const PARAMETER_ORDER: &str =
    "layers in order; weights (fan_in x fan_out) row-major, then bias";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    pub n_params: usize,
    pub parameter_order: String,
    /// Model-specific fields (role, normalizers, training record).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    net: &Mlp,
    metadata: serde_json::Value,
) -> Result<(), NeuralError> {
    let header = CheckpointHeader {
        format: "fmrc-checkpoint".into(),
        version: 1,
        layer_sizes: net.layer_sizes.clone(),
        activation: net.activation,
        init_seed: net.init_seed,
        n_params: net.num_params(),
        parameter_order: PARAMETER_ORDER.into(),
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(8 + json.len() + 8 * header.n_params);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in net.flat_params() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Mlp, CheckpointHeader), NeuralError> {
    let io = |e: std::io::Error| NeuralError::Checkpoint(e.to_string());
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    if header.format != "fmrc-checkpoint" || header.version != 1 {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let mut net = Mlp::zeros(&header.layer_sizes, header.activation)?;
    net.init_seed = header.init_seed;
    if net.num_params() != header.n_params {
        return Err(NeuralError::ParamCount {
            expected: net.num_params(),
            got: header.n_params,
        });
    }
    let mut raw = vec![0u8; 8 * header.n_params];
    r.read_exact(&mut raw).map_err(io)?;
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    net.set_flat_params(&flat)?;
    Ok((net, header))
}
