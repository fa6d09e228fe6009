//! The run configuration file: one JSON document with optional `data`,
//! `model`, `loss`, `train` and `ensemble` sections. Unknown keys anywhere
//! are rejected; missing keys take their defaults.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::Context;
use jointrec::corpus::{OversampleConfig, SynthConfig};
use jointrec::losses::LossConfig;
use jointrec::training::{ModelSettings, TrainConfig};
use serde::Deserialize;

/// The configuration is malformed or violates a constraint.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config schema violation: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub seed: u64,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub patience: usize,
    pub top_k: usize,
    pub use_augmentation: bool,
    pub use_swfc: bool,
    pub use_modality_dropout: bool,
    pub augment: OversampleConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            step_size: d.step_size,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            seed: d.seed,
            patience: d.patience,
            top_k: d.top_k,
            use_augmentation: d.use_augmentation,
            use_swfc: d.use_swfc,
            use_modality_dropout: d.use_modality_dropout,
            augment: d.augment,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    /// Also run greedy forward selection over the voted tables.
    pub greedy: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<DataSection>,
    pub model: ModelSettings,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub ensemble: EnsembleSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| SchemaError(e.to_string()))?;
        cfg.train_config().validate().map_err(|e| SchemaError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    /// Applies a `--seed` override to every seeded section.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.train.seed = seed;
            if let Some(d) = &mut self.data {
                d.seed = seed;
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            step_size: t.step_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: t.seed,
            patience: t.patience,
            top_k: t.top_k,
            use_augmentation: t.use_augmentation,
            use_swfc: t.use_swfc,
            use_modality_dropout: t.use_modality_dropout,
            loss: self.loss.clone(),
            model: self.model.clone(),
            augment: t.augment,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = RunConfig::parse("{}").unwrap();
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert!(cfg.data.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"trian": {}}"#,
            r#"{"train": {"use_swfcc": false}}"#,
            r#"{"loss": {"gama": 1.0}}"#,
            r#"{"model": {"h": 8, "depth": 2}}"#,
            r#"{"train": {"augment": {"ratio": 0.5}}}"#,
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn constraint_violations_are_schema_errors() {
        assert!(RunConfig::parse(r#"{"train": {"batch_size": 1}}"#).is_err());
        assert!(RunConfig::parse(r#"{"train": {"batch_size": 1, "use_swfc": false}}"#).is_ok());
        assert!(RunConfig::parse(r#"{"model": {"h": 6, "fusion_heads": 4}}"#).is_err());
        assert!(RunConfig::parse(r#"{"model": {"dropout_p": 1.5}}"#).is_err());
    }

    #[test]
    fn toggles_flow_through() {
        let cfg = RunConfig::parse(
            r#"{"train": {"use_swfc": false, "use_augmentation": false, "use_modality_dropout": false, "seed": 9}}"#,
        )
        .unwrap();
        let t = cfg.train_config();
        assert!(!t.use_swfc && !t.use_augmentation && !t.use_modality_dropout);
        assert_eq!(t.seed, 9);
    }
}
