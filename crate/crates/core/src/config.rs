//! Run configuration documents and run manifests.
//!
//! Both are JSON objects. Unknown keys are rejected and every omitted key
//! takes its default, so a serialized config is fully resolved.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive_k::AdaptiveKConfig;
use crate::data::ingest::IngestConfig;
use crate::data::synthetic::SyntheticConfig;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::train::{AblationGrid, SftConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub ingest: IngestConfig,
    pub adaptive_k: AdaptiveKConfig,
    /// Logit swaps applied before deriving samples.
    pub n_swaps: usize,
    pub sft: SftConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.adaptive_k.validate()?;
        self.sft.validate()?;
        self.train.validate()?;
        self.loss.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything needed to repeat a run: the command, its resolved configuration
/// and, for ablations, the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<AblationGrid>,
}

impl Manifest {
    pub fn new(command: &str, config: RunConfig, grid: Option<AblationGrid>) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            grid,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = parse_json(&read_text(path)?)?;
        m.config.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn read_grid(path: &Path) -> Result<AblationGrid> {
    parse_json(&read_text(path)?)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: "<config>".into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"train": {"epoch": 2}}"#).unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_json(r#"{"train": {"loss_kind": "sdpo", "epochs": 2}, "loss": {"beta": 0.5}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(
            RunConfig::from_json(r#"{"loss": {"beta": 0}}"#),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_json(r#"{"train": {"curriculum": "sideways"}}"#).is_err());
    }
}
