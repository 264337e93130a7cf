//! Fine-tuning harness: checkpointed training over epoch plans, model
//! selection by validation accuracy, few-shot subsets, seed aggregation and
//! per-epoch score analysis.

mod aggregate;
mod analysis;
mod config;
mod fewshot;
mod metrics;
mod run;

pub use aggregate::{
    aggregate_runs, aggregate_with_gaps, format_aggregate_table, write_aggregate_csv, AggregateRow,
};
pub use analysis::rescore_analysis;
pub use config::{ScoreSourceConfig, TrainConfig, DEFAULT_SEEDS};
pub use fewshot::{few_shot_select, FEW_SHOT_K};
pub use metrics::{compute_metrics, evaluate, ClassMetrics, Evaluation, Metrics};
pub use run::{
    checkpoint_marks, checkpoint_steps, epoch_plans, initial_scores, train, train_with_scores,
    write_checkpoints_csv, CheckpointEntry, InitialScores, RunOutcome, RunReport,
};
