use std::io::Write;

use serde::{Deserialize, Serialize};

use super::analysis::rescore_analysis;
use super::config::{ScoreSourceConfig, TrainConfig};
use super::metrics::{evaluate, Evaluation, Metrics};
use crate::dataset_io::{load_external_scores, token_lengths, Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::samplers::{make_plan, EpochPlan, Strategy};
use crate::scoring::{
    score_dataset, HistogramReport, ProbabilityProvider, ScoreSource, ScoreTable, TableProvider,
};
use crate::toy_model::{
    build_probe_scorer, loss_and_grad, optimizer_step, FeatureVector, LinearModel, ModelProvider,
    OptimizerState,
};

/// Example counts at which checkpoints fall: `ceil(k * fraction * n)` for
/// `k = 1..=ceil(1 / fraction)`, the last one always `n`. Duplicates are
/// kept, so the result always has `ceil(1 / fraction)` entries.
pub fn checkpoint_marks(n: usize, fraction: f64) -> Vec<usize> {
    // The 1e-9 slack keeps 3 * 0.1 * 100 from rounding up to 31.
    let count = ((1.0 / fraction) - 1e-9).ceil().max(1.0) as usize;
    (1..=count)
        .map(|k| {
            if k == count {
                n
            } else {
                ((k as f64 * fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
            }
        })
        .collect()
}

/// 1-based batch indices within an epoch after which a checkpoint is taken:
/// the batch that crosses each mark, deduplicated.
pub fn checkpoint_steps(n: usize, batch_size: usize, fraction: f64) -> Vec<usize> {
    let mut steps: Vec<usize> = checkpoint_marks(n, fraction)
        .into_iter()
        .map(|m| m.div_ceil(batch_size))
        .collect();
    steps.dedup();
    steps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    /// 1-based epoch.
    pub epoch: usize,
    /// Fraction of the epoch's examples the mark stands for (`k * fraction`).
    pub fraction_seen: f64,
    /// Examples actually consumed in this epoch when evaluated.
    pub examples_seen: usize,
    /// Optimizer steps taken so far in the whole run.
    pub global_step: u64,
    pub validation: Metrics,
    pub validation_loss: f64,
}

impl CheckpointEntry {
    /// Position on a continuous epoch axis, e.g. 1.3 for the third mark of
    /// the second epoch.
    pub fn progress(&self) -> f64 {
        (self.epoch - 1) as f64 + self.fraction_seen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub epochs: usize,
    pub train_size: usize,
    pub score_source: Option<ScoreSource>,
    pub checkpoints: Vec<CheckpointEntry>,
    /// Index into `checkpoints` of the first maximum validation accuracy.
    pub best_checkpoint: usize,
    pub test: Metrics,
    pub test_loss: f64,
    /// Mean training-batch loss per epoch.
    pub epoch_train_loss: Vec<f64>,
    pub histograms: Vec<HistogramReport>,
    /// File name of the manifest that produced this report, when written
    /// by the command-line driver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl RunReport {
    pub fn best(&self) -> &CheckpointEntry {
        &self.checkpoints[self.best_checkpoint]
    }
}

/// Checkpoint series as CSV:
/// `fraction_seen, acc, macro_f1, macro_p, macro_r, loss`, where
/// `fraction_seen` is measured in epochs.
pub fn write_checkpoints_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "fraction_seen",
        "acc",
        "macro_f1",
        "macro_p",
        "macro_r",
        "loss",
    ])?;
    for c in &report.checkpoints {
        let v = &c.validation;
        wtr.write_record([
            format!("{:.4}", c.progress()),
            v.accuracy.to_string(),
            v.macro_f1.to_string(),
            v.macro_precision.to_string(),
            v.macro_recall.to_string(),
            c.validation_loss.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A finished run: its report plus the parameters behind it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub best_model: LinearModel,
    pub final_model: LinearModel,
    /// End-of-epoch parameters, kept only when rescoring is enabled.
    pub snapshots: Vec<LinearModel>,
}

/// Initial difficulty scores for the training split, and the provider that
/// produced them when it is a model.
#[derive(Debug, Clone)]
pub struct InitialScores {
    pub table: ScoreTable,
    pub provider: Option<ModelProvider>,
}

impl InitialScores {
    /// Restricts to a subset of the training split.
    pub fn select(&self, parent_ids: &[usize]) -> InitialScores {
        InitialScores {
            table: self.table.select(parent_ids),
            provider: self.provider.clone(),
        }
    }
}

/// Computes initial scores per the configured source. Probe scores depend
/// on the seed; external scores do not.
pub fn initial_scores(train: &Dataset, config: &TrainConfig, seed: u64) -> Result<InitialScores> {
    match &config.scores {
        ScoreSourceConfig::External { path } => Ok(InitialScores {
            table: load_external_scores(path, train)?,
            provider: None,
        }),
        ScoreSourceConfig::Probe { .. } => {
            let settings = config.probe_settings().expect("probe source");
            let provider = build_probe_scorer(train, &settings, seed)?;
            let table = score_dataset(&provider, train)?;
            Ok(InitialScores {
                table,
                provider: Some(provider),
            })
        }
    }
}

/// Full run: resolves scores when the strategy or analysis needs them,
/// then trains.
pub fn train(
    train_split: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<RunOutcome> {
    config.validate()?;
    let scores = if config.strategy.needs_scores() || config.rescore {
        Some(initial_scores(train_split, config, seed)?)
    } else {
        None
    };
    train_with_scores(train_split, validation, test, config, seed, scores.as_ref())
}

/// The training loop proper.
///
/// Each epoch draws a fresh plan from the `(seed, epoch)` stream, takes
/// one optimizer step per batch and evaluates on the validation split at
/// every checkpoint mark. The test split is evaluated once, with the
/// parameters of the first checkpoint reaching the best validation
/// accuracy.
pub fn train_with_scores(
    train_split: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    seed: u64,
    scores: Option<&InitialScores>,
) -> Result<RunOutcome> {
    config.validate()?;
    if train_split.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = train_split.len();
    let featurizer = config.featurizer()?;
    let features: Vec<FeatureVector> = train_split
        .examples
        .iter()
        .map(|ex| featurizer.featurize(ex))
        .collect();
    let lengths = (config.strategy == Strategy::Length)
        .then(|| token_lengths(train_split, config.max_tokens));
    let plan_config = config.plan_config();

    let batch_size = config.batch_size;
    let steps_per_epoch = n.div_ceil(batch_size);
    let marks = checkpoint_marks(n, config.checkpoint_fraction);
    let mark_fractions: Vec<f64> = (1..=marks.len())
        .map(|k| (k as f64 * config.checkpoint_fraction).min(1.0))
        .collect();

    let mut model = LinearModel::zeros(featurizer, train_split.class_count);
    let mut opt = OptimizerState::new(
        config.optimizer,
        &model,
        (steps_per_epoch * config.epochs) as u64,
    );
    let mut checkpoints = Vec::with_capacity(marks.len() * config.epochs);
    let mut best: Option<(usize, f64, LinearModel)> = None;
    let mut epoch_train_loss = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();

    for epoch in 1..=config.epochs {
        let mut rng = stream(seed, Purpose::EpochPlan, epoch as u64);
        let plan = make_plan(
            config.strategy,
            scores.map(|s| &s.table),
            train_split,
            lengths.as_ref(),
            &plan_config,
            &mut rng,
        )?;
        debug_assert!(plan.is_permutation_of(n));

        let mut next_mark = 0;
        let mut seen = 0;
        let mut loss_sum = 0.0;
        for (b, chunk) in plan.batches().enumerate() {
            let batch: Vec<(&FeatureVector, usize)> = chunk
                .iter()
                .map(|&i| (&features[i], train_split.examples[i].label))
                .collect();
            let (loss, grad) = loss_and_grad(&model, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss;
            optimizer_step(&mut model, &grad, &mut opt)?;
            seen += chunk.len();

            if next_mark < marks.len() && seen >= marks[next_mark] {
                let eval = evaluate(&model, validation)?;
                while next_mark < marks.len() && seen >= marks[next_mark] {
                    let idx = checkpoints.len();
                    let acc = eval.metrics.accuracy;
                    if best.as_ref().is_none_or(|(_, a, _)| acc > *a) {
                        best = Some((idx, acc, model.clone()));
                    }
                    checkpoints.push(CheckpointEntry {
                        epoch,
                        fraction_seen: mark_fractions[next_mark],
                        examples_seen: seen,
                        global_step: opt.step,
                        validation: eval.metrics.clone(),
                        validation_loss: eval.loss,
                    });
                    next_mark += 1;
                }
            }
        }
        epoch_train_loss.push(loss_sum / steps_per_epoch as f64);
        if config.rescore {
            snapshots.push(model.clone());
        }
    }

    let (best_checkpoint, _, best_model) = best.expect("at least one checkpoint");
    let Evaluation {
        metrics: test_metrics,
        loss: test_loss,
    } = evaluate(&best_model, test)?;

    let histograms = if config.rescore {
        let target = match config.rescore_split {
            SplitTag::Validation => validation,
            _ => train_split,
        };
        epoch_histograms(target, train_split, scores, &snapshots, config.bins)?
    } else {
        Vec::new()
    };

    Ok(RunOutcome {
        report: RunReport {
            strategy: config.strategy,
            seed,
            epochs: config.epochs,
            train_size: n,
            score_source: scores.map(|s| s.table.source),
            checkpoints,
            best_checkpoint,
            test: test_metrics,
            test_loss,
            epoch_train_loss,
            histograms,
            manifest: None,
        },
        best_model,
        final_model: model,
        snapshots,
    })
}

fn epoch_histograms(
    target: &Dataset,
    train_split: &Dataset,
    scores: Option<&InitialScores>,
    snapshots: &[LinearModel],
    bins: usize,
) -> Result<Vec<HistogramReport>> {
    let initial = scores.ok_or(Error::MissingScores("rescore analysis"))?;
    let table_provider = TableProvider(&initial.table);
    let epoch0: &dyn ProbabilityProvider = match &initial.provider {
        Some(p) => p,
        None if std::ptr::eq(target, train_split) => &table_provider,
        None => {
            return Err(Error::InvalidConfig(
                "external scores cover only the training split; rescore the train split".into(),
            ))
        }
    };
    let trained: Vec<ModelProvider> = snapshots
        .iter()
        .map(|m| ModelProvider {
            model: m.clone(),
            source: ScoreSource::TrainedModel,
        })
        .collect();
    let mut providers: Vec<(usize, &dyn ProbabilityProvider)> = vec![(0, epoch0)];
    providers.extend(
        trained
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1, p as &dyn ProbabilityProvider)),
    );
    rescore_analysis(&providers, target, bins)
}

/// Plans the run would use, epoch by epoch, without training.
pub fn epoch_plans(
    train_split: &Dataset,
    config: &TrainConfig,
    seed: u64,
    scores: Option<&ScoreTable>,
) -> Result<Vec<EpochPlan>> {
    let lengths = token_lengths(train_split, config.max_tokens);
    let plan_config = config.plan_config();
    (1..=config.epochs)
        .map(|epoch| {
            let mut rng = stream(seed, Purpose::EpochPlan, epoch as u64);
            let mut plan = make_plan(
                config.strategy,
                scores,
                train_split,
                Some(&lengths),
                &plan_config,
                &mut rng,
            )?;
            plan.seed = Some(seed);
            plan.epoch = epoch;
            Ok(plan)
        })
        .collect()
}
