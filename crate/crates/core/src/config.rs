//! The engine configuration file (TOML). Every section and field is optional
//! and falls back to its default.

use crate::service::{GenerateConfig, RecommendConfig};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Directory holding datasets, dashboards and sessions.
    pub store_dir: PathBuf,
    /// Trained parameters; an untrained network is used when absent.
    pub checkpoint: Option<PathBuf>,
    /// Generation jobs running at once.
    pub job_workers: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            store_dir: PathBuf::from("store"),
            checkpoint: None,
            job_workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub recommend: RecommendConfig,
    pub server: ServerConfig,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Variant;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(EngineConfig::from_toml("").unwrap(), EngineConfig::default());
    }

    #[test]
    fn partial_sections_override_fields() {
        let cfg = EngineConfig::from_toml(
            r#"
            [train]
            total_steps = 1000
            variant = "independent_heads"
            datasets = ["data/cars.csv"]

            [train.network]
            hidden = 32

            [train.env.reward]
            n_max = 8

            [generate]
            quota = 300
            "#,
        )
        .unwrap();
        assert_eq!(cfg.train.total_steps, 1000);
        assert_eq!(cfg.train.variant, Variant::IndependentHeads);
        assert_eq!(cfg.train.network.hidden, 32);
        assert_eq!(cfg.train.network.embed, 64);
        assert_eq!(cfg.train.env.reward.n_max, 8);
        assert_eq!(cfg.train.worker_count, 4);
        assert_eq!(cfg.generate.quota, 300);
        assert_eq!(cfg.recommend.steps, 200);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = EngineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(EngineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_variant_is_an_error() {
        assert!(EngineConfig::from_toml("[train]\nvariant = \"bogus\"").is_err());
    }
}
