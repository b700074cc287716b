//! Run configuration: one section per pipeline stage plus the global seed
//! and output directory. Accepts TOML, or JSON when the file ends in `.json`.

use std::path::{Path, PathBuf};

use fmrc_core::diagnostics::{DiagnosticsConfig, WeakErrorConfig};
use fmrc_core::dynamics::{PotentialSpec, SdeConfig, SwissRollMap};
use fmrc_core::flowmatch::{ArchitectureConfig, OdeSolverConfig, TrainConfig};
use fmrc_core::neural::OptimizerConfig;
use fmrc_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub potential: PotentialSpec,
    pub sde: SimulationConfig,
    pub swiss_roll: SwissRollSection,
    pub dataset: DatasetConfig,
    pub model: ArchitectureConfig,
    pub training: TrainingConfig,
    pub msm: MsmConfig,
    pub diagnostics: DiagnosticsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            potential: PotentialSpec::seven_well(),
            sde: SimulationConfig::default(),
            swiss_roll: SwissRollSection::default(),
            dataset: DatasetConfig::default(),
            model: ArchitectureConfig::default(),
            training: TrainingConfig::default(),
            msm: MsmConfig::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub blowup_cap: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let d = SdeConfig::default();
        Self {
            dt: d.dt,
            beta: d.beta,
            n_steps: d.n_steps,
            burn_in: d.burn_in,
            blowup_cap: d.blowup_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwissRollSection {
    /// Embed simulated points before pairing (requires a 3-D potential).
    pub enabled: bool,
    #[serde(flatten)]
    pub map: SwissRollMap,
}

impl Default for SwissRollSection {
    fn default() -> Self {
        Self {
            enabled: true,
            map: SwissRollMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_trajectories: usize,
    pub lag_steps: usize,
    /// Pairs used for training (uniform subsample of the pair file).
    pub max_pairs: usize,
    /// Stride of the figure-ready sample CSV written by `simulate`.
    pub figure_stride: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 10,
            lag_steps: 100,
            max_pairs: 200_000,
            figure_stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub lr_final_fraction: f64,
    pub validation_fraction: f64,
    pub validation_max_rows: usize,
    pub eval_every: usize,
    pub loss_weights: [f64; 2],
    pub smoothing: f64,
    pub max_nonfinite_batches: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            iterations: d.iterations,
            batch_size: d.batch_size,
            optimizer: d.optimizer,
            lr_final_fraction: d.lr_final_fraction,
            validation_fraction: d.validation_fraction,
            validation_max_rows: d.validation_max_rows,
            eval_every: d.eval_every,
            loss_weights: d.loss_weights,
            smoothing: d.smoothing,
            max_nonfinite_batches: d.max_nonfinite_batches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsmConfig {
    pub n_microstates: usize,
    pub lag_steps: usize,
    pub n_clusters: usize,
    /// Coordinates of the clean trajectories the MSM is built on.
    pub coordinates: Vec<usize>,
    /// Points used to fit k-means (strided subsample).
    pub kmeans_max_points: usize,
    /// Points scored for RC separation and written to the plot CSVs.
    pub eval_max_points: usize,
    /// Allow merging one pair of adjacent clusters before scoring.
    pub allow_merge: bool,
}

impl Default for MsmConfig {
    fn default() -> Self {
        Self {
            n_microstates: 100,
            lag_steps: 100,
            n_clusters: 7,
            coordinates: vec![0, 1],
            kmeans_max_points: 100_000,
            eval_max_points: 50_000,
            allow_merge: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub weak: WeakErrorConfig,
    pub max_samples: usize,
    pub w2_samples: usize,
    pub w2_projections: usize,
    pub solver: OdeSolverConfig,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsConfig::default();
        Self {
            weak: d.weak,
            max_samples: d.max_samples,
            w2_samples: d.w2_samples,
            w2_projections: d.w2_projections,
            solver: d.solver,
        }
    }
}

/// Subtrees whose shape depends on a tag; their keys are checked by the
/// deserializer instead of against the defaults.
const OPAQUE: &[&str] = &["potential", "training.optimizer"];

fn unknown_keys(user: &Value, reference: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(u), Value::Object(r)) = (user, reference) else {
        return;
    };
    for (k, v) in u {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match r.get(k) {
            None => out.push(path),
            Some(rv) if !OPAQUE.contains(&path.as_str()) => unknown_keys(v, rv, &path, out),
            Some(_) => {}
        }
    }
}

impl RunConfig {
    /// Parse TOML (or JSON for `.json` paths), reporting every unknown key.
    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        let value: Value = if json {
            serde_json::from_str(text)
                .map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(format!("malformed TOML: {e}")))?
        };
        let reference =
            serde_json::to_value(RunConfig::default()).expect("default config serializes");
        let mut unknown = Vec::new();
        unknown_keys(&value, &reference, "", &mut unknown);
        if !unknown.is_empty() {
            let list: Vec<String> = unknown
                .iter()
                .map(|k| format!("  unknown key `{k}`"))
                .collect();
            return Err(CliError::Config(list.join("\n")));
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("  key `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    /// Cross-field checks, naming the offending keys.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        if let Err(e) = self.potential.validate() {
            bad.push(format!("  key `potential`: {e}"));
        }
        if let Err(e) = self.sde_config(0).validate() {
            bad.push(format!("  key `sde`: {e}"));
        }
        if self.swiss_roll.enabled {
            if self.potential.dim() != 3 {
                bad.push(format!(
                    "  key `swiss_roll.enabled`: the map needs a 3-D potential, got dimension {}",
                    self.potential.dim()
                ));
            }
            if let Err(e) = self.swiss_roll.map.validate() {
                bad.push(format!("  key `swiss_roll`: {e}"));
            }
        }
        if self.dataset.n_trajectories == 0 {
            bad.push("  key `dataset.n_trajectories`: must be at least 1".into());
        }
        if self.dataset.lag_steps == 0 {
            bad.push("  key `dataset.lag_steps`: must be at least 1".into());
        }
        if self.dataset.max_pairs < 2 {
            bad.push("  key `dataset.max_pairs`: must be at least 2".into());
        }
        if self.dataset.figure_stride == 0 {
            bad.push("  key `dataset.figure_stride`: must be at least 1".into());
        }
        if let Err(e) = self.train_config().validate() {
            bad.push(format!("  key `training`/`model`: {e}"));
        }
        let m = &self.msm;
        if m.n_microstates == 0 || m.lag_steps == 0 || m.n_clusters < 2 {
            bad.push(
                "  key `msm`: n_microstates and lag_steps must be positive, n_clusters at least 2"
                    .into(),
            );
        }
        if m.coordinates.is_empty() || m.coordinates.iter().any(|c| *c >= self.potential.dim()) {
            bad.push(format!(
                "  key `msm.coordinates`: must be nonempty indices below {}",
                self.potential.dim()
            ));
        }
        if m.kmeans_max_points < m.n_microstates || m.eval_max_points == 0 {
            bad.push("  key `msm.kmeans_max_points`/`msm.eval_max_points`: too small".into());
        }
        if let Err(e) = self.diagnostics_config().validate() {
            bad.push(format!("  key `diagnostics`: {e}"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("\n")))
        }
    }

    /// Seed of a named sub-stream of the global seed.
    pub fn stream_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn sde_config(&self, seed: u64) -> SdeConfig {
        SdeConfig {
            dt: self.sde.dt,
            beta: self.sde.beta,
            n_steps: self.sde.n_steps,
            burn_in: self.sde.burn_in,
            seed,
            blowup_cap: self.sde.blowup_cap,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            iterations: t.iterations,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            lr_final_fraction: t.lr_final_fraction,
            validation_fraction: t.validation_fraction,
            validation_max_rows: t.validation_max_rows,
            eval_every: t.eval_every,
            loss_weights: t.loss_weights,
            smoothing: t.smoothing,
            max_nonfinite_batches: t.max_nonfinite_batches,
            seed: self.stream_seed("train"),
            architecture: self.model.clone(),
        }
    }

    pub fn diagnostics_config(&self) -> DiagnosticsConfig {
        let d = &self.diagnostics;
        DiagnosticsConfig {
            weak: d.weak.clone(),
            max_samples: d.max_samples,
            w2_samples: d.w2_samples,
            w2_projections: d.w2_projections,
            solver: d.solver.clone(),
            seed: self.stream_seed("diagnose"),
        }
    }

    /// Pretty JSON with every field written out, newline-terminated.
    pub fn to_snapshot(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json_and_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_snapshot(), true).unwrap();
        assert_eq!(back, cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&toml_text, false).unwrap(), cfg);
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("", false).unwrap(), RunConfig::default());
    }

    #[test]
    fn snapshot_lists_every_field() {
        let v: Value = serde_json::from_str(&RunConfig::default().to_snapshot()).unwrap();
        for key in [
            "seed",
            "output_dir",
            "potential",
            "sde",
            "swiss_roll",
            "dataset",
            "model",
            "training",
            "msm",
            "diagnostics",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["swiss_roll"].get("angle_offset").is_some());
        assert!(v["training"]["optimizer"].get("beta2").is_some());
    }

    #[test]
    fn all_unknown_keys_are_reported() {
        let err = RunConfig::parse("[sde]\ndtt = 0.1\n[dataset]\nlagg = 3\n", false).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("sde.dtt") && msg.contains("dataset.lagg"),
            "{msg}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn type_errors_name_the_key() {
        let msg = RunConfig::parse("[training]\nbatch_size = \"many\"\n", false)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("training.batch_size"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let msg = RunConfig::parse("[sde]\ndt = -1.0\n", false)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("`sde`"), "{msg}");
        let msg = RunConfig::parse("[potential]\nkind = \"double_well1d\"\n", false)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("swiss_roll.enabled"), "{msg}");
    }

    #[test]
    fn tagged_sections_parse() {
        let text = "[potential]\nkind = \"composite\"\nparts = [{ kind = \"double_well1d\", barrier = 2.0 }, { kind = \"quadratic\", stiffness = [10.0] }]\n[swiss_roll]\nenabled = false\n[msm]\nn_clusters = 2\ncoordinates = [0]\n[training.optimizer]\nkind = \"sgd\"\nlr = 0.01\n";
        let cfg = RunConfig::parse(text, false).unwrap();
        assert_eq!(cfg.potential.dim(), 2);
        assert_eq!(cfg.training.optimizer, OptimizerConfig::Sgd { lr: 0.01 });
    }

    #[test]
    fn sub_streams_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.stream_seed("train"), cfg.stream_seed("simulate"));
        assert_eq!(cfg.train_config().seed, cfg.stream_seed("train"));
    }
}
