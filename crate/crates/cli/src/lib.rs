//! The `fmrc` command-line pipeline: simulate trajectories, train reaction
//! coordinates, evaluate them against a Markov state model and compute
//! operator-error diagnostics.
//!
//! Exit codes: 0 success, 2 usage/configuration/input errors, 3 numerical
//! failures.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, EXIT_NUMERICAL, EXIT_USAGE};

use commands::{diagnose, eval, simulate, train};
use run::{Context, RunLock};

#[derive(Debug, Parser)]
#[command(
    name = "fmrc",
    version,
    about = "Flow-matching reaction coordinates for stochastic dynamics"
)]
pub struct Cli {
    /// Run configuration (TOML, or JSON for `.json` files). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write trajectory and pair files.
    Simulate,
    /// Train an encoder and velocity fields on the pair file.
    Train {
        #[arg(long, value_enum, default_value = "fmrc")]
        mode: train::Mode,
        /// Frozen encoder checkpoint for `--mode assess`.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Overrides `training.iterations`.
        #[arg(long)]
        iterations: Option<usize>,
        /// Pair file (default `<out>/pairs.fmrc`).
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Output subdirectory name under `<out>/models` (default: the mode).
        #[arg(long)]
        tag: Option<String>,
    },
    /// Build the reference MSM, run PCCA+ and score the learned RC.
    Eval {
        /// Model manifest (default `<out>/models/fmrc/manifest.json`).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Weak operator errors and W2 distances for trained models.
    Diagnose {
        /// Model manifest; repeat with `--sweep`.
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
        /// Treat the manifests as a training-budget sweep.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Print version and file-format versions.
    Version,
}

/// Cap rayon's global pool from `FMRC_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FMRC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "FMRC_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // A second initialisation in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Load the config and apply command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Train {
        iterations: Some(n),
        ..
    } = cli.command
    {
        cfg.training.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Version = cli.command {
        println!("fmrc {}", env!("CARGO_PKG_VERSION"));
        println!("trajectory/pair format FMRC{}", fmrc_core::format::VERSION);
        println!("checkpoint format fmrc-checkpoint v1");
        return Ok(());
    }
    configure_threads()?;
    let cfg = resolve_config(&cli)?;
    let ctx = Context { cfg };
    let _lock = RunLock::acquire(ctx.root())?;
    match cli.command {
        Command::Simulate => {
            let s = simulate::run(&ctx)?;
            println!(
                "wrote {} trajectories and {} pairs to {}",
                s.n_trajectories,
                s.n_pairs,
                ctx.root().display()
            );
        }
        Command::Train {
            mode,
            encoder,
            pairs,
            tag,
            ..
        } => {
            let s = train::run(
                &ctx,
                &train::TrainArgs {
                    mode,
                    encoder,
                    pairs,
                    tag,
                },
            )?;
            println!(
                "trained {} for {} iterations; final validation loss {}",
                s.mode,
                s.iterations,
                s.final_validation_loss.map_or("n/a".into(), |v| format!("{v:.6}"))
            );
        }
        Command::Eval { manifest, tag } => {
            let r = eval::run(&ctx, &eval::EvalArgs { manifest, tag })?;
            println!(
                "accuracy {:.4}, min gap ratio {:.3}{}",
                r.separation.accuracy,
                r.separation.min_gap_ratio,
                r.separation
                    .merged
                    .map_or(String::new(), |(a, b)| format!(", merged clusters {a} and {b}"))
            );
        }
        Command::Diagnose {
            manifests,
            sweep,
            pairs,
            tag,
        } => match diagnose::run(
            &ctx,
            &diagnose::DiagnoseArgs {
                manifests,
                sweep,
                pairs,
                tag,
            },
        )? {
            diagnose::DiagnoseOutcome::Single(d) => println!(
                "weak error forward {:.4e} (noise {:.2e}), backward {:.4e} (noise {:.2e}), W2 {:.4}",
                d.forward.weak_error, d.forward.noise, d.backward.weak_error, d.backward.noise, d.w2_pairs
            ),
            diagnose::DiagnoseOutcome::Sweep(rows) => {
                for r in rows {
                    println!(
                        "budget {}: loss {:.5}, weak forward {:.4e}, weak backward {:.4e}, W2 {:.4}",
                        r.budget, r.train_loss, r.weak_error_forward, r.weak_error_backward, r.w2_pairs
                    );
                }
            }
        },
        Command::Version => unreachable!(),
    }
    Ok(())
}
