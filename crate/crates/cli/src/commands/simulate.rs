use fmrc_core::dynamics::{
    extract_pairs_multi, ring_initial_conditions, simulate_ensemble, Trajectory,
};
use fmrc_core::format::{self, FileMetadata};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{self, fmt_f64, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n_trajectories: usize,
    pub points_per_trajectory: Vec<usize>,
    pub dim: usize,
    pub lag_steps: usize,
    pub n_pairs: usize,
    pub swiss_roll: bool,
    pub pairs_sha256: String,
}

pub fn run(ctx: &Context) -> Result<SimulateSummary, CliError> {
    let cfg = &ctx.cfg;
    let dim = cfg.potential.dim();
    let initial =
        ring_initial_conditions(cfg.dataset.n_trajectories, dim, cfg.stream_seed("initial"));
    let sde = cfg.sde_config(cfg.stream_seed("simulate"));
    log::info!(
        "simulating {} trajectories of {} steps",
        initial.len(),
        sde.n_steps
    );
    let clean = simulate_ensemble(&cfg.potential, &sde, &initial)?;
    let observed: Vec<Trajectory> = if cfg.swiss_roll.enabled {
        clean
            .iter()
            .map(|t| cfg.swiss_roll.map.apply_to_trajectory(t))
            .collect::<Result<_, _>>()?
    } else {
        clean.clone()
    };

    let tdir = ctx.trajectory_dir();
    for (i, t) in clean.iter().enumerate() {
        let p = run::trajectory_file(&tdir, "clean", i);
        run::write_with(&p, |w| {
            format::write_trajectory(w, t).map_err(|e| CliError::io(&p, e))
        })?;
    }
    if cfg.swiss_roll.enabled {
        for (i, t) in observed.iter().enumerate() {
            let p = run::trajectory_file(&tdir, "observed", i);
            run::write_with(&p, |w| {
                format::write_trajectory(w, t).map_err(|e| CliError::io(&p, e))
            })?;
        }
    }

    let pairs = extract_pairs_multi(&observed, cfg.dataset.lag_steps)?;
    let meta = FileMetadata::from_origin(&observed[0].origin, observed[0].dt);
    let pairs_path = ctx.pairs_path();
    run::write_with(&pairs_path, |w| {
        format::write_pairs(w, &pairs, &meta).map_err(|e| CliError::io(&pairs_path, e))
    })?;

    let stride = cfg.dataset.figure_stride;
    let mut header: Vec<String> = vec!["trajectory".into()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    if cfg.swiss_roll.enabled {
        header.extend((1..=dim).map(|k| format!("obs{k}")));
    }
    let rows = clean
        .iter()
        .zip(&observed)
        .enumerate()
        .flat_map(|(i, (c, o))| {
            (0..c.len()).step_by(stride).map(move |k| {
                let mut r = vec![i.to_string()];
                r.extend(c.point(k).iter().map(|v| fmt_f64(*v)));
                if cfg.swiss_roll.enabled {
                    r.extend(o.point(k).iter().map(|v| fmt_f64(*v)));
                }
                r.join(",")
            })
        });
    run::write_csv(
        &ctx.root().join("figure_samples.csv"),
        &header.join(","),
        rows,
    )?;

    let summary = SimulateSummary {
        n_trajectories: clean.len(),
        points_per_trajectory: clean.iter().map(|t| t.len()).collect(),
        dim,
        lag_steps: cfg.dataset.lag_steps,
        n_pairs: pairs.len(),
        swiss_roll: cfg.swiss_roll.enabled,
        pairs_sha256: run::sha256_file(&pairs_path)?,
    };
    run::write_json(&ctx.root().join("simulate_summary.json"), &summary)?;
    ctx.write_snapshot(ctx.root(), "simulate")?;
    Ok(summary)
}
