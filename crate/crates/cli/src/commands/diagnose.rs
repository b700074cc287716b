use std::path::{Path, PathBuf};

use fmrc_core::diagnostics::{
    fmrc_vs_operator_error_sweep, model_diagnostics, write_sweep_csv, SweepEntry, SweepRow,
};
use fmrc_core::flowmatch::{FlowModels, ModelManifest};
use serde_json::json;

use crate::error::CliError;
use crate::run::{self, Context};

#[derive(Debug, Clone)]
pub struct DiagnoseArgs {
    pub manifests: Vec<PathBuf>,
    pub sweep: bool,
    pub pairs: Option<PathBuf>,
    pub tag: Option<String>,
}

pub enum DiagnoseOutcome {
    Single(Box<fmrc_core::diagnostics::ModelDiagnostics>),
    Sweep(Vec<SweepRow>),
}

fn load(path: &Path) -> Result<(FlowModels, ModelManifest), CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "missing manifest {}",
            path.display()
        )));
    }
    Ok(FlowModels::load(path)?)
}

pub fn run(ctx: &Context, args: &DiagnoseArgs) -> Result<DiagnoseOutcome, CliError> {
    let cfg = &ctx.cfg;
    let dcfg = cfg.diagnostics_config();
    let pairs_path = args.pairs.clone().unwrap_or_else(|| ctx.pairs_path());
    let (pairs, _) = run::read_pairs(&pairs_path)?;
    let hash = run::sha256_file(&pairs_path)?;
    let manifests = if args.manifests.is_empty() {
        vec![ctx.models_dir("fmrc").join("manifest.json")]
    } else {
        args.manifests.clone()
    };
    let loaded: Vec<(FlowModels, ModelManifest)> = manifests
        .iter()
        .map(|p| load(p))
        .collect::<Result<_, _>>()?;
    for (p, (_, m)) in manifests.iter().zip(&loaded) {
        if m.dataset_hash != hash {
            log::warn!("{} was trained on a different pair file", p.display());
        }
    }

    if !args.sweep {
        if loaded.len() != 1 {
            return Err(CliError::Usage(
                "pass exactly one --manifest, or --sweep for several".into(),
            ));
        }
        let (models, manifest) = &loaded[0];
        let tag = args.tag.clone().unwrap_or_else(|| manifest.mode.clone());
        let out = ctx.root().join("diagnostics").join(tag);
        let d = model_diagnostics(&pairs, models, &dcfg)?;
        run::write_json(
            &out.join("report.json"),
            &json!({
                "mode": manifest.mode,
                "dataset_hash_matches": manifest.dataset_hash == hash,
                "diagnostics": d,
            }),
        )?;
        ctx.write_snapshot(&out, "diagnose")?;
        return Ok(DiagnoseOutcome::Single(Box::new(d)));
    }

    let mut entries = Vec::with_capacity(loaded.len());
    for (p, (models, m)) in manifests.iter().zip(&loaded) {
        let budget = m
            .metadata
            .get("iterations")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as usize;
        // The saved models are the best-validation snapshot.
        let train_loss = m
            .best_validation_loss
            .or(m.final_validation_loss)
            .ok_or_else(|| {
                CliError::Input(format!("{} records no validation loss", p.display()))
            })?;
        entries.push(SweepEntry {
            budget,
            train_loss,
            models,
        });
    }
    let out = ctx
        .root()
        .join("diagnostics")
        .join(args.tag.clone().unwrap_or_else(|| "sweep".into()));
    let rows = fmrc_vs_operator_error_sweep(&pairs, &entries, &dcfg).map_err(|e| match e {
        fmrc_core::diagnostics::DiagError::UnsortedSweep(k) => CliError::Usage(format!(
            "sweep manifests must be ordered by strictly decreasing final loss; entry {k} ({}) is not",
            manifests[k].display()
        )),
        other => other.into(),
    })?;
    let csv = out.join("sweep.csv");
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_sweep_csv(&csv, &rows).map_err(|e| CliError::io(&csv, e))?;
    run::write_json(&out.join("sweep.json"), &rows)?;
    ctx.write_snapshot(&out, "diagnose")?;
    Ok(DiagnoseOutcome::Sweep(rows))
}
