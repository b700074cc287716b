use std::path::PathBuf;

use fmrc_core::dynamics::Trajectory;
use fmrc_core::flowmatch::FlowModels;
use fmrc_core::msm::{
    count_transition_matrix, kmeans_discretize, pcca_plus, rc_cluster_separation,
    rc_cluster_separation_with_merge, SeparationReport,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{self, fmt_f64, Context};

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub manifest: Option<PathBuf>,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub rc_dim: usize,
    pub n_points: usize,
    pub n_microstates: usize,
    pub active_microstates: usize,
    pub excluded_microstates: Vec<usize>,
    pub msm_lag_steps: usize,
    pub kmeans_inertia: f64,
    pub pcca_eigenvalues: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
    pub separation: SeparationReport,
    pub warnings: Vec<String>,
}

fn rows_of(points: &[&[f64]]) -> Array2<f64> {
    let d = points.first().map_or(0, |p| p.len());
    Array2::from_shape_fn((points.len(), d), |(i, j)| points[i][j])
}

pub fn run(ctx: &Context, args: &EvalArgs) -> Result<EvalReport, CliError> {
    let cfg = &ctx.cfg;
    let m = &cfg.msm;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| ctx.models_dir("fmrc").join("manifest.json"));
    if !manifest_path.exists() {
        return Err(CliError::Input(format!(
            "missing manifest {}",
            manifest_path.display()
        )));
    }
    let (models, manifest) = FlowModels::load(&manifest_path)?;
    let encoder = models.encoder.ok_or_else(|| {
        CliError::Input(format!(
            "{} has no encoder; eval needs a learned RC",
            manifest_path.display()
        ))
    })?;
    let tag = args.tag.clone().unwrap_or_else(|| manifest.mode.clone());
    let out = ctx.root().join("eval").join(&tag);

    let tdir = ctx.trajectory_dir();
    let clean = run::read_trajectories(&tdir, "clean")?;
    let observed = if cfg.swiss_roll.enabled {
        run::read_trajectories(&tdir, "observed")?
    } else {
        clean.clone()
    };
    if observed.len() != clean.len() || observed.iter().zip(&clean).any(|(o, c)| o.len() != c.len())
    {
        return Err(CliError::Input(
            "clean and observed trajectories do not match".into(),
        ));
    }
    if observed[0].dim != encoder.input_dim() {
        return Err(CliError::Input(format!(
            "encoder expects dimension {}, trajectories have {}",
            encoder.input_dim(),
            observed[0].dim
        )));
    }
    let proj: Vec<Trajectory> = clean.iter().map(|t| t.project(&m.coordinates)).collect();
    let index: Vec<(usize, usize)> = proj
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |k| (i, k)))
        .collect();

    let fit_step = index.len().div_ceil(m.kmeans_max_points);
    let fit_pts: Vec<&[f64]> = index
        .iter()
        .step_by(fit_step)
        .map(|&(i, k)| proj[i].point(k))
        .collect();
    let (disc, _) = kmeans_discretize(
        rows_of(&fit_pts).view(),
        m.n_microstates,
        cfg.stream_seed("eval-kmeans"),
    )?;
    let seqs: Vec<Vec<usize>> = proj
        .iter()
        .map(|t| {
            let pts: Vec<&[f64]> = t.iter_points().collect();
            disc.assign(rows_of(&pts).view())
        })
        .collect();
    let tm = count_transition_matrix(&seqs, m.n_microstates, m.lag_steps)?;
    let pcca = pcca_plus(&tm, m.n_clusters)?;

    let eval_step = index.len().div_ceil(m.eval_max_points);
    let mut chosen = Vec::new();
    let mut labels = Vec::new();
    for &(i, k) in index.iter().step_by(eval_step) {
        if let Some(l) = pcca.label_of_state(seqs[i][k]) {
            chosen.push((i, k));
            labels.push(l);
        }
    }
    let obs_pts: Vec<&[f64]> = chosen.iter().map(|&(i, k)| observed[i].point(k)).collect();
    let rc = encoder.evaluate_rc(rows_of(&obs_pts).view())?;
    let rc_dim = rc.ncols();
    let rc0: Vec<f64> = rc.column(0).to_vec();
    let mut warnings = Vec::new();
    if rc_dim > 1 {
        warnings.push(format!(
            "rc has {rc_dim} components; separation uses the first"
        ));
    }
    let separation = if m.allow_merge && m.n_clusters > 2 {
        rc_cluster_separation_with_merge(&rc0, &labels)?
    } else {
        rc_cluster_separation(&rc0, &labels)?
    };
    let mut cluster_sizes = vec![0; m.n_clusters];
    for l in &labels {
        cluster_sizes[*l] += 1;
    }

    let report = EvalReport {
        mode: manifest.mode.clone(),
        rc_dim,
        n_points: labels.len(),
        n_microstates: m.n_microstates,
        active_microstates: tm.n_active(),
        excluded_microstates: tm.excluded.clone(),
        msm_lag_steps: m.lag_steps,
        kmeans_inertia: disc.inertia,
        pcca_eigenvalues: pcca.eigenvalues.clone(),
        cluster_sizes,
        separation,
        warnings,
    };
    run::write_json(&out.join("separation.json"), &report)?;

    let coord_names: Vec<String> = m
        .coordinates
        .iter()
        .map(|c| format!("x{}", c + 1))
        .collect();
    let rc_names: Vec<String> = (1..=rc_dim)
        .map(|k| {
            if rc_dim == 1 {
                "rc".into()
            } else {
                format!("rc{k}")
            }
        })
        .collect();
    let header = format!("{},{},cluster", coord_names.join(","), rc_names.join(","));
    let rows = chosen.iter().enumerate().map(|(n, &(i, k))| {
        let mut r: Vec<String> = proj[i].point(k).iter().map(|v| fmt_f64(*v)).collect();
        r.extend(rc.row(n).iter().map(|v| fmt_f64(*v)));
        r.push(labels[n].to_string());
        r.join(",")
    });
    run::write_csv(&out.join("rc_projection.csv"), &header, rows)?;
    let rows = rc0
        .iter()
        .zip(&labels)
        .map(|(v, l)| format!("{},{l}", fmt_f64(*v)));
    run::write_csv(&out.join("rc_clusters.csv"), "rc,cluster", rows)?;

    let n = m.n_microstates;
    let na = tm.n_active();
    let rows = (0..na).flat_map(|a| {
        let tm = &tm;
        (0..na).filter_map(move |b| {
            let (i, j) = (tm.active[a], tm.active[b]);
            let c = tm.counts[i * n + j];
            (c > 0).then(|| format!("{i},{j},{c},{}", fmt_f64(tm.p[a * na + b])))
        })
    });
    run::write_csv(
        &out.join("transition_matrix.csv"),
        "from,to,count,probability",
        rows,
    )?;
    let chi_header: Vec<String> = (0..m.n_clusters).map(|c| format!("chi{c}")).collect();
    let rows = (0..na).map(|a| {
        let mut r = vec![pcca.states[a].to_string()];
        r.extend(pcca.membership(a).iter().map(|v| fmt_f64(*v)));
        r.push(pcca.labels[a].to_string());
        r.join(",")
    });
    run::write_csv(
        &out.join("chi.csv"),
        &format!("state,{},label", chi_header.join(",")),
        rows,
    )?;
    let rows = (0..disc.k).map(|s| {
        let mut r = vec![s.to_string()];
        r.extend(disc.center(s).iter().map(|v| fmt_f64(*v)));
        r.join(",")
    });
    run::write_csv(
        &out.join("microstates.csv"),
        &format!("state,{}", coord_names.join(",")),
        rows,
    )?;
    ctx.write_snapshot(&out, "eval")?;
    Ok(report)
}
