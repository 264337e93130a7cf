use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("label out of range at line {line}: label {label} with {class_count} classes")]
    LabelOutOfRange {
        line: usize,
        label: i64,
        class_count: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("split fractions must be positive and sum to 1 (got {0:?})")]
    InvalidFractions(Vec<f64>),

    #[error("class {class} has {count} examples, too few to stratify into {splits} splits")]
    ClassTooSmall {
        class: usize,
        count: usize,
        splits: usize,
    },

    #[error("scores file is missing id {0}")]
    MissingScore(usize),

    #[error("scores file has duplicate id {0}")]
    DuplicateScore(usize),

    #[error("scores file has unknown id {id} (dataset has {len} examples)")]
    UnknownScoreId { id: usize, len: usize },

    #[error("id {id}: expected {expected} probabilities, got {got}")]
    ClassCountMismatch {
        id: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("difficulty score needs at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("scoring failed for example {id}: {reason}")]
    Provider { id: usize, reason: String },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),

    #[error("feature index {index} out of range for dimension {dim}")]
    FeatureOutOfRange { index: usize, dim: usize },

    #[error("feature dimension must be a power of two, got {0}")]
    InvalidDimension(usize),

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("unknown strategy {0:?}; valid strategies are: Random, Length, E2D, D2E, SME, SMD, PME, PMD")]
    UnknownStrategy(String),

    #[error("strategy {strategy} requires {expected} ranking, got {got}")]
    DirectionMismatch {
        strategy: &'static str,
        expected: &'static str,
        got: &'static str,
    },

    #[error("strategy {0} requires difficulty scores")]
    MissingScores(&'static str),

    #[error("sampling weights are all zero or invalid")]
    DegenerateWeights,

    #[error("partition split {b1}+{b2} does not match batch size {batch_size}")]
    SplitMismatch {
        b1: usize,
        b2: usize,
        batch_size: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {k} examples but only {n} are available")]
    TooManyRequested { k: usize, n: usize },

    #[error("inconsistent seed sets across strategies: {0}")]
    InconsistentSeeds(String),

    #[error("no model snapshots retained for rescoring")]
    NoSnapshots,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
