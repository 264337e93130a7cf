//! Confidence-margin difficulty scores, rankings and score histograms.
//!
//! A difficulty score is the gap between the two largest class
//! probabilities. Zero means the model cannot tell the top classes apart
//! (hardest); one means it puts all mass on a single class (easiest).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{Dataset, Example};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over the task's classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Wraps an already normalized vector, rejecting negative, non-finite or
    /// non-normalized input.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidProbabilities(format!(
                "entries must be finite and non-negative: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProbabilities(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(ClassDistribution(probs))
    }

    pub(crate) fn from_normalized_unchecked(probs: Vec<f64>) -> Self {
        ClassDistribution(probs)
    }

    pub fn uniform(class_count: usize) -> Self {
        ClassDistribution(vec![1.0 / class_count as f64; class_count])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Divides a vector of non-negative class masses by its sum.
pub fn normalize_restricted(raw: &[f64]) -> Result<ClassDistribution> {
    if raw.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidProbabilities(format!(
            "entries must be finite and non-negative: {raw:?}"
        )));
    }
    let sum: f64 = raw.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::InvalidProbabilities(
            "cannot normalize an all-zero vector".into(),
        ));
    }
    Ok(ClassDistribution(raw.iter().map(|p| p / sum).collect()))
}

/// Margin between the largest and second-largest probability. For two
/// classes this is `|p0 - p1|`.
pub fn difficulty_score(dist: &ClassDistribution) -> Result<f64> {
    let probs = dist.probs();
    if probs.len() < 2 {
        return Err(Error::TooFewClasses(probs.len()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok((first - second).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    External,
    ProbeModel,
    TrainedModel,
}

/// Per-example difficulty scores together with the distributions they
/// were computed from. Index `i` belongs to example id `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub scores: Vec<f64>,
    pub distributions: Vec<ClassDistribution>,
    pub source: ScoreSource,
}

impl ScoreTable {
    pub fn from_distributions(
        distributions: Vec<ClassDistribution>,
        source: ScoreSource,
    ) -> Result<Self> {
        let scores = distributions
            .iter()
            .map(difficulty_score)
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreTable {
            scores,
            distributions,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rows for the given parent ids, re-indexed densely in that order.
    pub fn select(&self, parent_ids: &[usize]) -> ScoreTable {
        ScoreTable {
            scores: parent_ids.iter().map(|&i| self.scores[i]).collect(),
            distributions: parent_ids
                .iter()
                .map(|&i| self.distributions[i].clone())
                .collect(),
            source: self.source,
        }
    }

    /// Argmax label of every stored distribution.
    pub fn predicted_labels(&self) -> Vec<usize> {
        self.distributions
            .iter()
            .map(ClassDistribution::argmax)
            .collect()
    }

    pub fn mean_score(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Anything that maps an example to class probabilities without changing
/// its own state.
pub trait ProbabilityProvider: Sync {
    fn class_count(&self) -> usize;
    fn distribution(&self, example: &Example) -> Result<ClassDistribution>;
    fn source(&self) -> ScoreSource;
}

/// Serves the distributions already stored in a score table, by example id.
pub struct TableProvider<'a>(pub &'a ScoreTable);

impl ProbabilityProvider for TableProvider<'_> {
    fn class_count(&self) -> usize {
        self.0.distributions.first().map_or(0, |d| d.class_count())
    }

    fn distribution(&self, example: &Example) -> Result<ClassDistribution> {
        self.0
            .distributions
            .get(example.id)
            .cloned()
            .ok_or_else(|| Error::Provider {
                id: example.id,
                reason: "no stored distribution".into(),
            })
    }

    fn source(&self) -> ScoreSource {
        self.0.source
    }
}

/// Scores every example. Evaluation runs in parallel; results come back in
/// id order and the first failing id (lowest) is reported.
pub fn score_dataset(provider: &dyn ProbabilityProvider, dataset: &Dataset) -> Result<ScoreTable> {
    let results: Vec<Result<ClassDistribution>> = dataset
        .examples
        .par_iter()
        .map(|ex| {
            let dist = provider.distribution(ex).map_err(|e| match e {
                e @ Error::Provider { .. } => e,
                other => Error::Provider {
                    id: ex.id,
                    reason: other.to_string(),
                },
            })?;
            if dist.class_count() != dataset.class_count {
                return Err(Error::ClassCountMismatch {
                    id: ex.id,
                    expected: dataset.class_count,
                    got: dist.class_count(),
                });
            }
            Ok(dist)
        })
        .collect();
    let dists = results.into_iter().collect::<Result<Vec<_>>>()?;
    ScoreTable::from_distributions(dists, provider.source())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascending,
    Descending,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Ascending => "ascending",
            Direction::Descending => "descending",
        }
    }
}

/// Example ids sorted by score. Equal scores keep ascending id order in
/// both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub order: Vec<usize>,
    pub direction: Direction,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn rank_examples(table: &ScoreTable, direction: Direction) -> RankedList {
    rank_by(&table.scores, direction)
}

pub(crate) fn rank_by(scores: &[f64], direction: Direction) -> RankedList {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so ties stay in ascending id order.
    match direction {
        Direction::Ascending => order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b])),
        Direction::Descending => order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a])),
    }
    RankedList { order, direction }
}

/// Equal-width score histogram on `[0, 1]`, optionally split by whether
/// the prediction matched the gold label.
///
/// Without predictions every example is counted in `correct` and
/// `by_correctness` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bin_edges: Vec<f64>,
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
    pub by_correctness: bool,
    pub epoch_tag: usize,
}

impl HistogramReport {
    pub fn bins(&self) -> usize {
        self.correct.len()
    }

    pub fn total(&self) -> usize {
        self.correct.iter().sum::<usize>() + self.incorrect.iter().sum::<usize>()
    }

    /// Fraction misclassified per bin; `None` for empty bins.
    pub fn error_rates(&self) -> Vec<Option<f64>> {
        self.correct
            .iter()
            .zip(&self.incorrect)
            .map(|(&c, &i)| (c + i > 0).then(|| i as f64 / (c + i) as f64))
            .collect()
    }

    /// Mean of bin midpoints weighted by counts.
    pub fn mean_bin_midpoint(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let weighted: f64 = (0..self.bins())
            .map(|b| {
                let mid = 0.5 * (self.bin_edges[b] + self.bin_edges[b + 1]);
                mid * (self.correct[b] + self.incorrect[b]) as f64
            })
            .sum();
        weighted / total as f64
    }
}

/// Bin index for a score in `[0, 1]`; a score of exactly 1 lands in the
/// last bin.
pub fn bin_index(score: f64, bins: usize) -> usize {
    ((score * bins as f64).floor() as usize).min(bins - 1)
}

/// `predictions`, when given, is `(predicted, gold)` aligned with the table.
pub fn score_histogram(
    table: &ScoreTable,
    predictions: Option<(&[usize], &[usize])>,
    bins: usize,
    epoch_tag: usize,
) -> Result<HistogramReport> {
    if bins < 2 {
        return Err(Error::TooFewBins(bins));
    }
    if let Some((pred, gold)) = predictions {
        for (what, got) in [("predictions", pred.len()), ("labels", gold.len())] {
            if got != table.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: table.len(),
                    got,
                });
            }
        }
    }
    let mut correct = vec![0; bins];
    let mut incorrect = vec![0; bins];
    for (i, &s) in table.scores.iter().enumerate() {
        let b = bin_index(s, bins);
        match predictions {
            Some((pred, gold)) if pred[i] != gold[i] => incorrect[b] += 1,
            _ => correct[b] += 1,
        }
    }
    Ok(HistogramReport {
        bin_edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        correct,
        incorrect,
        by_correctness: predictions.is_some(),
        epoch_tag,
    })
}

/// Writes histograms as CSV with columns
/// `bin_lo, bin_hi, correct_count, incorrect_count, epoch_tag`.
pub fn write_histograms_csv<W: Write>(reports: &[HistogramReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "bin_lo",
        "bin_hi",
        "correct_count",
        "incorrect_count",
        "epoch_tag",
    ])?;
    for r in reports {
        for b in 0..r.bins() {
            wtr.write_record([
                r.bin_edges[b].to_string(),
                r.bin_edges[b + 1].to_string(),
                r.correct[b].to_string(),
                r.incorrect[b].to_string(),
                r.epoch_tag.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties. Returns `None`
/// when either side is constant or fewer than two points are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut vx, mut vy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}
