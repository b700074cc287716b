use std::path::{Path, PathBuf};

use fmrc_core::flowmatch::{self, EncoderModel, ModelManifest, TrainMode};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::run::{self, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Encoder and both velocity fields, jointly.
    Fmrc,
    /// Fields conditioned on the full state (no bottleneck).
    Full,
    /// Fields only, conditioned on a frozen encoder given by `--encoder`.
    Assess,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fmrc => "fmrc",
            Mode::Full => "full",
            Mode::Assess => "assess",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub mode: Mode,
    pub encoder: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: String,
    pub iterations: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub final_validation_loss: Option<f64>,
    pub best_validation_loss: Option<f64>,
    pub best_iteration: Option<usize>,
    pub final_train_loss: Option<f64>,
    pub dataset_hash: String,
}

pub fn run(ctx: &Context, args: &TrainArgs) -> Result<TrainSummary, CliError> {
    let cfg = &ctx.cfg;
    let tag = args
        .tag
        .clone()
        .unwrap_or_else(|| args.mode.name().to_string());
    let dir = ctx.models_dir(&tag);
    let pairs_path = args.pairs.clone().unwrap_or_else(|| ctx.pairs_path());
    let (all, _) = run::read_pairs(&pairs_path)?;
    let dataset_hash = run::sha256_file(&pairs_path)?;
    let data = all.subsample(cfg.dataset.max_pairs, cfg.stream_seed("pairs"));

    let mut encoder_bytes = None;
    let mode = match args.mode {
        Mode::Fmrc => TrainMode::Fmrc,
        Mode::Full => TrainMode::Full,
        Mode::Assess => {
            let path = args
                .encoder
                .as_ref()
                .ok_or_else(|| CliError::Usage("--mode assess requires --encoder <path>".into()))?;
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let enc = EncoderModel::read_checkpoint(&mut bytes.as_slice())
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if enc.input_dim() != data.dim {
                return Err(CliError::Input(format!(
                    "encoder expects dimension {}, pairs have {}",
                    enc.input_dim(),
                    data.dim
                )));
            }
            encoder_bytes = Some(bytes);
            TrainMode::FixedEncoder(enc)
        }
    };

    let tc = cfg.train_config();
    log::info!(
        "training {} on {} pairs for {} iterations",
        args.mode.name(),
        data.len(),
        tc.iterations
    );
    let outcome = match flowmatch::train(&data, mode, &tc) {
        Ok(o) => o,
        Err(e) => {
            let err = CliError::from(e);
            if err.exit_code() == crate::error::EXIT_NUMERICAL {
                write_failure(&dir, args.mode, &tc.iterations, &err)?;
            }
            return Err(err);
        }
    };

    let mut manifest =
        ModelManifest::new(args.mode.name(), &dataset_hash, data.dim, data.lag_steps);
    manifest.final_validation_loss = outcome.final_validation;
    manifest.best_validation_loss = outcome.best_validation;
    manifest.best_iteration = outcome.best_iteration;
    manifest.metadata = json!({
        "iterations": tc.iterations,
        "n_train": outcome.n_train,
        "n_validation": outcome.n_validation,
        "train_seed": tc.seed,
        "pairs_file": pairs_path.file_name().map(|n| n.to_string_lossy().into_owned()),
    });
    let extra = json!({ "mode": args.mode.name(), "iterations": tc.iterations, "dataset_hash": dataset_hash });
    outcome.best.save(&dir, &mut manifest, extra)?;
    if let Some(bytes) = encoder_bytes {
        let name = manifest
            .encoder
            .clone()
            .expect("assess mode has an encoder");
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
    }
    let hist_path = dir.join("loss_history.csv");
    run::write_with(&hist_path, |w| {
        flowmatch::write_history_csv(w, &outcome.history).map_err(|e| CliError::io(&hist_path, e))
    })?;
    let summary = TrainSummary {
        mode: args.mode.name().into(),
        iterations: tc.iterations,
        n_train: outcome.n_train,
        n_validation: outcome.n_validation,
        final_validation_loss: outcome.final_validation,
        best_validation_loss: outcome.best_validation,
        best_iteration: outcome.best_iteration,
        final_train_loss: outcome.history.last().map(|r| r.smoothed_total),
        dataset_hash,
    };
    run::write_json(&dir.join("train_summary.json"), &summary)?;
    ctx.write_snapshot(&dir, "train")?;
    Ok(summary)
}

fn write_failure(
    dir: &Path,
    mode: Mode,
    iterations: &usize,
    err: &CliError,
) -> Result<(), CliError> {
    let path = dir.join("failure.json");
    run::write_json(
        &path,
        &json!({ "mode": mode.name(), "iterations": iterations, "error": err.to_string() }),
    )?;
    log::error!("training failed; details in {}", path.display());
    Ok(())
}
