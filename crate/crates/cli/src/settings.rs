//! Layered configuration: command-line flag, then config file, then
//! built-in default, resolved field by field.
//!
//! The config file is TOML with flat, dotted keys such as
//! `train.epochs = 5`; `[train]` tables are accepted and flattened to the
//! same names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use curriculum_core::dataset_io::SplitTag;
use curriculum_core::samplers::Strategy;
use curriculum_core::toy_model::{OptimizerConfig, OptimizerKind};
use curriculum_core::trainer::{ScoreSourceConfig, TrainConfig, FEW_SHOT_K};
use serde_json::{json, Value};

use crate::UsageError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// One layer of optional settings. Flags and the config file each produce
/// one; [`resolve`] merges them over the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layer {
    pub class_count: Option<usize>,
    pub max_tokens: Option<usize>,
    pub split_seed: Option<u64>,
    pub strategy: Option<Strategy>,
    pub strategies: Option<Vec<Strategy>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub checkpoint_fraction: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub optimizer_kind: Option<OptimizerKind>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub probe_fraction: Option<f64>,
    pub probe_epochs: Option<usize>,
    pub scores: Option<PathBuf>,
    pub dim: Option<usize>,
    pub rescore: Option<bool>,
    pub rescore_split: Option<SplitTag>,
    pub bins: Option<usize>,
    pub k: Option<usize>,
    pub jobs: Option<usize>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "data.class_count",
    "data.max_tokens",
    "data.split_seed",
    "train.strategy",
    "train.epochs",
    "train.batch_size",
    "train.checkpoint_fraction",
    "train.seeds",
    "optimizer.kind",
    "optimizer.lr",
    "optimizer.weight_decay",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.epsilon",
    "probe.fraction",
    "probe.epochs",
    "scores.path",
    "model.dim",
    "analysis.rescore",
    "analysis.rescore_split",
    "analysis.bins",
    "fewshot.k",
    "compare.strategies",
    "compare.jobs",
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_usize(v: &toml::Value) -> std::result::Result<usize, String> {
    v.as_integer()
        .filter(|i| *i >= 0)
        .map(|i| i as usize)
        .ok_or_else(|| format!("expected a non-negative integer, got {v}"))
}

fn as_f64(v: &toml::Value) -> std::result::Result<f64, String> {
    v.as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| format!("expected a number, got {v}"))
}

fn as_str(v: &toml::Value) -> std::result::Result<&str, String> {
    v.as_str()
        .ok_or_else(|| format!("expected a string, got {v}"))
}

fn as_strategy(v: &toml::Value) -> std::result::Result<Strategy, String> {
    as_str(v)?
        .parse()
        .map_err(|e: curriculum_core::Error| e.to_string())
}

pub fn parse_split_tag(s: &str) -> std::result::Result<SplitTag, String> {
    match s.to_ascii_lowercase().as_str() {
        "train" => Ok(SplitTag::Train),
        "validation" | "val" => Ok(SplitTag::Validation),
        other => Err(format!("expected train or validation, got {other:?}")),
    }
}

impl Layer {
    /// Parses config-file text, reporting every bad field at once.
    pub fn from_toml_str(text: &str) -> Result<Layer> {
        let table: toml::Table = text.parse().context("config file is not valid TOML")?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);

        let mut layer = Layer::default();
        let mut errors = Vec::new();
        for (key, v) in &flat {
            let r: std::result::Result<(), String> = (|| {
                match key.as_str() {
                    "data.class_count" => layer.class_count = Some(as_usize(v)?),
                    "data.max_tokens" => layer.max_tokens = Some(as_usize(v)?),
                    "data.split_seed" => layer.split_seed = Some(as_usize(v)? as u64),
                    "train.strategy" => layer.strategy = Some(as_strategy(v)?),
                    "train.epochs" => layer.epochs = Some(as_usize(v)?),
                    "train.batch_size" => layer.batch_size = Some(as_usize(v)?),
                    "train.checkpoint_fraction" => layer.checkpoint_fraction = Some(as_f64(v)?),
                    "train.seeds" => {
                        let arr = v.as_array().ok_or("expected an array of integers")?;
                        layer.seeds = Some(
                            arr.iter()
                                .map(|s| as_usize(s).map(|s| s as u64))
                                .collect::<std::result::Result<_, _>>()?,
                        );
                    }
                    "optimizer.kind" => {
                        layer.optimizer_kind = Some(
                            as_str(v)?
                                .parse()
                                .map_err(|e: curriculum_core::Error| e.to_string())?,
                        )
                    }
                    "optimizer.lr" => layer.lr = Some(as_f64(v)?),
                    "optimizer.weight_decay" => layer.weight_decay = Some(as_f64(v)?),
                    "optimizer.beta1" => layer.beta1 = Some(as_f64(v)?),
                    "optimizer.beta2" => layer.beta2 = Some(as_f64(v)?),
                    "optimizer.epsilon" => layer.epsilon = Some(as_f64(v)?),
                    "probe.fraction" => layer.probe_fraction = Some(as_f64(v)?),
                    "probe.epochs" => layer.probe_epochs = Some(as_usize(v)?),
                    "scores.path" => layer.scores = Some(PathBuf::from(as_str(v)?)),
                    "model.dim" => layer.dim = Some(as_usize(v)?),
                    "analysis.rescore" => {
                        layer.rescore = Some(v.as_bool().ok_or("expected a boolean")?)
                    }
                    "analysis.rescore_split" => {
                        layer.rescore_split = Some(parse_split_tag(as_str(v)?)?)
                    }
                    "analysis.bins" => layer.bins = Some(as_usize(v)?),
                    "fewshot.k" => layer.k = Some(as_usize(v)?),
                    "compare.strategies" => {
                        let arr = v.as_array().ok_or("expected an array of strategy names")?;
                        layer.strategies = Some(
                            arr.iter()
                                .map(as_strategy)
                                .collect::<std::result::Result<_, _>>()?,
                        );
                    }
                    "compare.jobs" => layer.jobs = Some(as_usize(v)?),
                    _ => {
                        return Err(format!(
                            "unknown key (known keys: {})",
                            KNOWN_KEYS.join(", ")
                        ))
                    }
                }
                Ok(())
            })();
            if let Err(msg) = r {
                errors.push(format!("  {key}: {msg}"));
            }
        }
        if !errors.is_empty() {
            bail!(UsageError(format!(
                "invalid config file:\n{}",
                errors.join("\n")
            )));
        }
        Ok(layer)
    }

    pub fn from_file(path: &Path) -> Result<Layer> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Layer::from_toml_str(&text)
    }

    /// `self` where set, otherwise `lower`.
    pub fn over(self, lower: Layer) -> Layer {
        macro_rules! pick {
            ($($f:ident),*) => { Layer { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            class_count,
            max_tokens,
            split_seed,
            strategy,
            strategies,
            epochs,
            batch_size,
            checkpoint_fraction,
            seeds,
            optimizer_kind,
            lr,
            weight_decay,
            beta1,
            beta2,
            epsilon,
            probe_fraction,
            probe_epochs,
            scores,
            dim,
            rescore,
            rescore_split,
            bins,
            k,
            jobs
        )
    }
}

/// Every setting with defaults materialised.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub class_count: Option<usize>,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub strategies: Vec<Strategy>,
    pub k: usize,
    pub jobs: usize,
}

pub fn resolve(flags: Layer, file: Layer) -> Result<Resolved> {
    let l = flags.over(file);
    let defaults = TrainConfig::default();
    let kind = l.optimizer_kind.unwrap_or(defaults.optimizer.kind);
    let base = OptimizerConfig::new(kind);
    let optimizer = OptimizerConfig {
        kind,
        lr: l.lr.unwrap_or(base.lr),
        weight_decay: l.weight_decay.unwrap_or(base.weight_decay),
        beta1: l.beta1.unwrap_or(base.beta1),
        beta2: l.beta2.unwrap_or(base.beta2),
        epsilon: l.epsilon.unwrap_or(base.epsilon),
    };
    let scores = match l.scores {
        Some(path) => ScoreSourceConfig::External { path },
        None => {
            let ScoreSourceConfig::Probe { fraction, epochs } = ScoreSourceConfig::default() else {
                unreachable!()
            };
            ScoreSourceConfig::Probe {
                fraction: l.probe_fraction.unwrap_or(fraction),
                epochs: l.probe_epochs.unwrap_or(epochs),
            }
        }
    };
    let train = TrainConfig {
        strategy: l.strategy.unwrap_or(defaults.strategy),
        epochs: l.epochs.unwrap_or(defaults.epochs),
        batch_size: l.batch_size.unwrap_or(defaults.batch_size),
        partition_split: None,
        optimizer,
        checkpoint_fraction: l
            .checkpoint_fraction
            .unwrap_or(defaults.checkpoint_fraction),
        seeds: l.seeds.unwrap_or(defaults.seeds),
        scores,
        max_tokens: l.max_tokens,
        dim: l.dim.unwrap_or(defaults.dim),
        rescore: l.rescore.unwrap_or(defaults.rescore),
        rescore_split: l.rescore_split.unwrap_or(defaults.rescore_split),
        bins: l.bins.unwrap_or(defaults.bins),
    };
    let k = l.k.unwrap_or(FEW_SHOT_K);
    let mut violations = train.violations();
    if k == 0 {
        violations.push("fewshot.k must be at least 1".to_string());
    }
    if !violations.is_empty() {
        bail!(UsageError(format!(
            "invalid configuration:\n{}",
            violations
                .iter()
                .map(|v| format!("  {v}"))
                .collect::<Vec<_>>()
                .join("\n")
        )));
    }
    Ok(Resolved {
        class_count: l.class_count,
        split_seed: l.split_seed.unwrap_or(0),
        train,
        strategies: l.strategies.unwrap_or_default(),
        k,
        jobs: l.jobs.unwrap_or(1).max(1),
    })
}

impl Resolved {
    /// Flat `key -> value` view for the manifest.
    pub fn to_flat_json(&self) -> BTreeMap<String, Value> {
        let t = &self.train;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("config.version", json!(CONFIG_SCHEMA_VERSION));
        put("data.class_count", json!(self.class_count));
        put("data.max_tokens", json!(t.max_tokens));
        put("data.split_seed", json!(self.split_seed));
        put("train.strategy", json!(t.strategy.name()));
        put("train.epochs", json!(t.epochs));
        put("train.batch_size", json!(t.batch_size));
        put("train.partition_split", json!(t.plan_config().split()));
        put("train.checkpoint_fraction", json!(t.checkpoint_fraction));
        put("train.seeds", json!(t.seeds));
        put("optimizer.kind", json!(t.optimizer.kind));
        put("optimizer.lr", json!(t.optimizer.lr));
        put("optimizer.weight_decay", json!(t.optimizer.weight_decay));
        put("optimizer.beta1", json!(t.optimizer.beta1));
        put("optimizer.beta2", json!(t.optimizer.beta2));
        put("optimizer.epsilon", json!(t.optimizer.epsilon));
        match &t.scores {
            ScoreSourceConfig::Probe { fraction, epochs } => {
                put("probe.fraction", json!(fraction));
                put("probe.epochs", json!(epochs));
                put("scores.path", Value::Null);
            }
            ScoreSourceConfig::External { path } => {
                put("scores.path", json!(path.display().to_string()));
            }
        }
        put("model.dim", json!(t.dim));
        put("analysis.rescore", json!(t.rescore));
        put("analysis.rescore_split", json!(t.rescore_split));
        put("analysis.bins", json!(t.bins));
        put("fewshot.k", json!(self.k));
        put(
            "compare.strategies",
            json!(self.strategies.iter().map(|s| s.name()).collect::<Vec<_>>()),
        );
        put("compare.jobs", json!(self.jobs));
        m
    }
}
