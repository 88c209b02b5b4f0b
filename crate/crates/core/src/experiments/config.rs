//! Experiment configuration: one TOML file describes a full run. Dotted
//! `--set key=value` overrides apply on the parsed TOML before
//! deserialisation, and a SHA-256 content hash keys the result store.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::SamplerConfig;
use crate::error::{Error, Result};
use crate::gridworld::GridSpec;
use crate::latentmodel::{ArchConfig, LossConfig, ModelKind, TrainConfig};

/// Rollout collection settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { episodes: 16, steps_per_episode: 256 }
    }
}

/// Metric evaluation settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mig_bins: usize,
    /// 0 evaluates MIG over the exhaustive enumeration.
    pub mig_samples: usize,
    pub rank_pairs: usize,
    /// Metric names to emit in `evaluate`: "mig", "rank_correlation",
    /// "traversal".
    pub metrics: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mig_bins: 20,
            mig_samples: 0,
            rank_pairs: 10_000,
            metrics: vec!["mig".into(), "rank_correlation".into(), "traversal".into()],
        }
    }
}

/// Downstream RL evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub gamma: f64,
    pub max_episode_steps: usize,
    pub dqn: crate::agent::DqnConfig,
    /// Episodes in the final-window average of the learning curve.
    pub final_window: usize,
    /// DQN seeds per encoder.
    pub seeds: Vec<u64>,
    /// Use every encoder-training seed ("all_seeds") or just the first
    /// ("first_seed").
    pub encoder_mode: String,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.99,
            max_episode_steps: 100,
            dqn: crate::agent::DqnConfig::default(),
            final_window: 20,
            seeds: vec![0, 1, 2, 3, 4],
            encoder_mode: "first_seed".into(),
        }
    }
}

/// Spacing sweep settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub step_px_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { step_px_values: vec![1, 4, 8] }
    }
}

/// Model-comparison settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub models: Vec<ModelKind>,
    /// Also train triplet variants with ground-truth supervision.
    pub include_ground_truth: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            models: vec![ModelKind::BetaVae, ModelKind::AdaGvae, ModelKind::BetaTvae, ModelKind::AdaTvae],
            include_ground_truth: true,
        }
    }
}

/// Full declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub data: DataConfig,
    pub sampler: SamplerConfig,
    pub loss: LossConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub rl: RlConfig,
    pub sweep: SweepConfig,
    pub compare: CompareConfig,
    pub seeds: Vec<u64>,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec { num_squares: 1, square_size_px: 8, step_px: 8, grid_cells_per_axis: 8, image_side_px: 64 },
            data: DataConfig::default(),
            sampler: SamplerConfig::default(),
            loss: LossConfig::default(),
            model: ArchConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            rl: RlConfig::default(),
            sweep: SweepConfig::default(),
            compare: CompareConfig::default(),
            seeds: vec![0, 1, 2],
            output_dir: "runs/out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sampler.validate()?;
        self.loss.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.output_dir.is_empty() {
            return Err(Error::Config("output_dir must be set".into()));
        }
        for m in &self.eval.metrics {
            if !matches!(m.as_str(), "mig" | "rank_correlation" | "traversal") {
                return Err(Error::Config(format!("unknown metric '{m}'")));
            }
        }
        if self.rl.encoder_mode != "first_seed" && self.rl.encoder_mode != "all_seeds" {
            return Err(Error::Config(format!(
                "encoder_mode must be first_seed or all_seeds, got '{}'",
                self.rl.encoder_mode
            )));
        }
        if self.sweep.step_px_values.is_empty() {
            return Err(Error::Config("sweep needs at least one step_px value".into()));
        }
        for &s in &self.sweep.step_px_values {
            let needed = GridSpec::min_image_side(self.grid.square_size_px, s, self.grid.grid_cells_per_axis);
            if needed > self.grid.image_side_px {
                return Err(Error::Config(format!(
                    "sweep step_px {s} needs image_side_px >= {needed}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialise: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file, apply dotted-path overrides, then optional
    /// seed/output overrides.
    pub fn load(
        path: Option<&std::path::Path>,
        sets: &[String],
        seed: Option<u64>,
        output: Option<&str>,
    ) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => ExperimentConfig::default().to_toml()?,
        };
        let mut value: toml::Value =
            toml::from_str(&text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        for set in sets {
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{set}'")))?;
            apply_override(&mut value, key.trim(), raw.trim())?;
        }
        let mut cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("config shape: {e}")))?;
        if let Some(s) = seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = output {
            cfg.output_dir = o.to_string();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical TOML serialisation.
    pub fn content_hash(&self) -> Result<String> {
        let toml = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(toml.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        Ok(out)
    }
}

/// Set a dotted key in a TOML tree, parsing the value as TOML (falling
/// back to a bare string).
pub fn apply_override(root: &mut toml::Value, dotted: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v exists"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{dotted}'")));
    }
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{part}' is not a table in '{dotted}'")))?
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("parent of '{dotted}' is not a table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let parsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn content_hash_tracks_changes() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.loss.beta = 7.0;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
    }

    #[test]
    fn overrides_apply_with_types() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, ExperimentConfig::default().to_toml().unwrap()).unwrap();
        let cfg = ExperimentConfig::load(
            Some(&path),
            &[
                "loss.beta=2.5".to_string(),
                "grid.step_px=4".to_string(),
                "loss.model_kind=\"ada_tvae\"".to_string(),
                "seeds=[7,8]".to_string(),
            ],
            None,
            None,
        )
        .unwrap();
        assert_eq!(cfg.loss.beta, 2.5);
        assert_eq!(cfg.grid.step_px, 4);
        assert_eq!(cfg.loss.model_kind, ModelKind::AdaTvae);
        assert_eq!(cfg.seeds, vec![7, 8]);
    }

    #[test]
    fn seed_and_output_flags_override() {
        let cfg = ExperimentConfig::load(None, &[], Some(42), Some("elsewhere")).unwrap();
        assert_eq!(cfg.seeds, vec![42]);
        assert_eq!(cfg.output_dir, "elsewhere");
    }

    #[test]
    fn bad_override_is_an_error() {
        let mut v: toml::Value = toml::from_str("a = 1").unwrap();
        assert!(apply_override(&mut v, "a..b", "1").is_err());
    }

    #[test]
    fn invalid_sweep_spacing_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.step_px_values = vec![20];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
