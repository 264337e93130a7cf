use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset_io::SplitTag;
use crate::error::{Error, Result};
use crate::samplers::{default_split, PlanConfig, Strategy};
use crate::toy_model::{Featurizer, OptimizerConfig, ProbeSettings};

pub const DEFAULT_SEEDS: [u64; 3] = [66, 88, 99];

/// Where initial difficulty scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreSourceConfig {
    Probe { fraction: f64, epochs: usize },
    External { path: PathBuf },
}

impl Default for ScoreSourceConfig {
    fn default() -> Self {
        ScoreSourceConfig::Probe {
            fraction: 0.1,
            epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    /// PME/PMD partition sizes; defaults to 9 + 7 for a batch of 16.
    pub partition_split: Option<(usize, usize)>,
    pub optimizer: OptimizerConfig,
    pub checkpoint_fraction: f64,
    pub seeds: Vec<u64>,
    pub scores: ScoreSourceConfig,
    pub max_tokens: Option<usize>,
    pub dim: usize,
    /// Keep per-epoch snapshots and emit score histograms for each.
    pub rescore: bool,
    pub rescore_split: SplitTag,
    pub bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Random,
            epochs: 5,
            batch_size: 16,
            partition_split: None,
            optimizer: OptimizerConfig::default(),
            checkpoint_fraction: 0.1,
            seeds: DEFAULT_SEEDS.to_vec(),
            scores: ScoreSourceConfig::default(),
            max_tokens: None,
            dim: 1 << 16,
            rescore: false,
            rescore_split: SplitTag::Train,
            bins: 20,
        }
    }
}

impl TrainConfig {
    /// Collects every violated constraint instead of stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs < 1 {
            out.push("train.epochs must be at least 1".to_string());
        }
        if self.batch_size < 1 {
            out.push("train.batch_size must be at least 1".to_string());
        }
        if !(self.checkpoint_fraction > 0.0 && self.checkpoint_fraction <= 1.0) {
            out.push(format!(
                "train.checkpoint_fraction must lie in (0, 1], got {}",
                self.checkpoint_fraction
            ));
        }
        if self.seeds.is_empty() {
            out.push("train.seeds must not be empty".to_string());
        }
        if let Some((b1, b2)) = self.partition_split {
            if b1 + b2 != self.batch_size {
                out.push(format!(
                    "train.partition_split {b1}+{b2} must equal train.batch_size {}",
                    self.batch_size
                ));
            }
        }
        if !self.dim.is_power_of_two() {
            out.push(format!(
                "model.dim must be a power of two, got {}",
                self.dim
            ));
        }
        if self.bins < 2 {
            out.push(format!(
                "analysis.bins must be at least 2, got {}",
                self.bins
            ));
        }
        if self.max_tokens == Some(0) {
            out.push("data.max_tokens must be positive".to_string());
        }
        if let ScoreSourceConfig::Probe { fraction, .. } = self.scores {
            if !(fraction > 0.0 && fraction <= 1.0) {
                out.push(format!("probe.fraction must lie in (0, 1], got {fraction}"));
            }
        }
        if let Err(e) = self.optimizer.validate() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }

    pub fn featurizer(&self) -> Result<Featurizer> {
        Featurizer::new(self.dim, self.max_tokens)
    }

    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            batch_size: self.batch_size,
            split: Some(
                self.partition_split
                    .unwrap_or_else(|| default_split(self.batch_size)),
            ),
            max_tokens: self.max_tokens,
        }
    }

    pub fn probe_settings(&self) -> Option<ProbeSettings> {
        match self.scores {
            ScoreSourceConfig::Probe { fraction, epochs } => Some(ProbeSettings {
                fraction,
                epochs,
                batch_size: self.batch_size,
                optimizer: self.optimizer,
                featurizer: Featurizer {
                    dim: self.dim,
                    max_tokens: self.max_tokens,
                },
            }),
            ScoreSourceConfig::External { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.seeds, [66, 88, 99]);
        assert_eq!(c.plan_config().split(), (9, 7));
    }

    #[test]
    fn violations_are_listed_per_field() {
        let c = TrainConfig {
            epochs: 0,
            checkpoint_fraction: 1.5,
            dim: 1000,
            ..Default::default()
        };
        let v = c.violations();
        assert_eq!(v.len(), 3);
        assert!(v[0].contains("train.epochs"));
        assert!(v[1].contains("train.checkpoint_fraction"));
        assert!(v[2].contains("model.dim"));
    }
}
