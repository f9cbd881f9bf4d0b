//! Experiment configuration: one JSON file, every field optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::expert::ExpertParams;
use crate::net::TrainConfig;
use crate::plant::PlantParams;
use crate::rollout::{Conditioning, EpisodeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dataset_sizes: Vec<usize>,
    pub eval_episodes: usize,
    pub ood_angles_deg: Vec<f64>,
    /// Dataset size whose models are tested off-axis; the largest size when absent.
    pub ood_dataset_size: Option<usize>,
    pub ood_policies: Vec<Conditioning>,
    /// Leading steps of every episode left out of velocity-error summaries.
    pub velocity_skip_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dataset_sizes: vec![25, 50, 100, 200, 400],
            eval_episodes: 100,
            ood_angles_deg: vec![15.0, 30.0, 45.0, 60.0],
            ood_dataset_size: None,
            ood_policies: vec![Conditioning::Cc, Conditioning::Vc],
            velocity_skip_steps: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub collect: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { collect: 42, eval: 777_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub plant: PlantParams,
    pub expert: ExpertParams,
    pub train: TrainConfig,
    pub grid: GridConfig,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    /// Worker threads for collection and evaluation; all cores when absent.
    pub workers: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            expert: ExpertParams::default(),
            train: TrainConfig::default(),
            grid: GridConfig::default(),
            seeds: Seeds::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.to_path_buf(), source },
            e => e,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|source| ConfigError::Parse { path: PathBuf::from("<config>"), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.plant.validate() {
            return bad(format!("plant: {e}"));
        }
        if let Err(e) = self.expert.validate() {
            return bad(format!("expert: {e}"));
        }
        if let Err(e) = self.train.validate() {
            return bad(format!("train: {e}"));
        }
        let g = &self.grid;
        if g.dataset_sizes.is_empty() || g.dataset_sizes.iter().any(|&n| n < 2) {
            return bad("grid.dataset_sizes must be non-empty, each at least 2".into());
        }
        if g.eval_episodes == 0 {
            return bad("grid.eval_episodes must be positive".into());
        }
        if g.ood_angles_deg.iter().any(|a| !a.is_finite() || *a == 0.0) {
            return bad("grid.ood_angles_deg must be finite and off-axis (non-zero)".into());
        }
        if !g.ood_angles_deg.is_empty() && !g.dataset_sizes.contains(&self.ood_dataset_size()) {
            return bad("grid.ood_dataset_size must be one of grid.dataset_sizes".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig { plant: self.plant.clone(), expert: self.expert.clone() }
    }

    pub fn max_dataset_size(&self) -> usize {
        self.grid.dataset_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn ood_dataset_size(&self) -> usize {
        self.grid.ood_dataset_size.unwrap_or_else(|| self.max_dataset_size())
    }

    pub fn datasets_dir(&self, n: usize) -> PathBuf {
        self.output_dir.join("datasets").join(format!("n{n}"))
    }

    pub fn models_dir(&self, n: usize) -> PathBuf {
        self.output_dir.join("models").join(format!("n{n}"))
    }

    pub fn eval_dir(&self, suite: crate::eval::Suite) -> PathBuf {
        self.output_dir.join("eval").join(suite.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(Config::parse("{}").unwrap(), c);
    }

    #[test]
    fn partial_override() {
        let c = Config::parse(r#"{"train": {"epochs": 3}, "grid": {"dataset_sizes": [25]}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        assert_eq!(c.grid.dataset_sizes, vec![25]);
        assert_eq!(c.ood_dataset_size(), 25);
        assert!(Config::parse(r#"{"grid": {"dataset_sizes": [25], "ood_dataset_size": 50}}"#).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(Config::parse(r#"{"trian": {}}"#), Err(ConfigError::Parse { .. })));
        assert!(matches!(Config::parse(r#"{"plant": {"mas": 1}}"#), Err(ConfigError::Parse { .. })));
        assert!(matches!(Config::parse(r#"{"train": {"lr": -1}}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse(r#"{"plant": {"dt": 0.01}}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse(r#"{"grid": {"ood_angles_deg": [0]}}"#), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse(r#"{"workers": 0}"#), Err(ConfigError::Invalid(_))));
    }
}
