//! Epoch schedules for the six curriculum strategies and the two
//! baselines.
//!
//! Every plan is a permutation of the training ids: each example is seen
//! exactly once per epoch. Probability-based strategies realise their rank
//! weights as successive weighted draws without replacement.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{token_lengths, Dataset, TokenLengthIndex};
use crate::error::{Error, Result};
use crate::scoring::{rank_examples, Direction, RankedList, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Random,
    Length,
    E2D,
    D2E,
    SME,
    SMD,
    PME,
    PMD,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Random,
        Strategy::Length,
        Strategy::E2D,
        Strategy::D2E,
        Strategy::SME,
        Strategy::SMD,
        Strategy::PME,
        Strategy::PMD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "Random",
            Strategy::Length => "Length",
            Strategy::E2D => "E2D",
            Strategy::D2E => "D2E",
            Strategy::SME => "SME",
            Strategy::SMD => "SMD",
            Strategy::PME => "PME",
            Strategy::PMD => "PMD",
        }
    }

    /// Sort direction of the difficulty ranking this strategy consumes, or
    /// `None` for the baselines, which ignore scores.
    ///
    /// Descending puts the easiest (highest score) example at rank 1.
    pub fn direction(self) -> Option<Direction> {
        match self {
            Strategy::Random | Strategy::Length => None,
            Strategy::E2D | Strategy::SMD | Strategy::PMD => Some(Direction::Descending),
            Strategy::D2E | Strategy::SME | Strategy::PME => Some(Direction::Ascending),
        }
    }

    pub fn needs_scores(self) -> bool {
        self.direction().is_some()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionTag {
    B1,
    B2,
    #[serde(rename = "whole")]
    Whole,
}

impl PartitionTag {
    pub fn name(self) -> &'static str {
        match self {
            PartitionTag::B1 => "B1",
            PartitionTag::B2 => "B2",
            PartitionTag::Whole => "whole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankLaw {
    /// `w_n = n^2`
    Square,
    /// `w_n = (N - n)^2`; rank N gets weight zero.
    ComplementSquare,
}

impl RankLaw {
    fn weight(self, rank: u64, n: u64) -> u64 {
        match self {
            RankLaw::Square => rank * rank,
            RankLaw::ComplementSquare => (n - rank) * (n - rank),
        }
    }
}

/// Raw rank weights for ranks `1..=N` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RankWeights {
    pub weights: Vec<f64>,
    pub total: f64,
}

impl RankWeights {
    /// Weights divided by their own sum.
    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total).collect()
    }
}

pub fn rank_weights(n: usize, law: RankLaw) -> Result<RankWeights> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let weights: Vec<f64> = (1..=n as u64)
        .map(|r| law.weight(r, n as u64) as f64)
        .collect();
    let total = weights.iter().sum();
    Ok(RankWeights { weights, total })
}

/// Random order distributed as successive weighted draws without
/// replacement, `weights[i]` belonging to id `i`.
///
/// Uses exponential race keys: id `i` gets `E_i / w_i` with `E_i ~ Exp(1)`
/// and ids are emitted by increasing key. Zero-weight ids follow all
/// positive-weight ids in ascending id order.
pub fn weighted_permutation<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut zero = Vec::new();
    for (id, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            let u: f64 = rng.gen();
            keyed.push((-(1.0 - u).ln() / w, id));
        } else {
            zero.push(id);
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, id)| id).chain(zero).collect())
}

/// One epoch's schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub epoch: usize,
    pub batch_size: usize,
    pub order: Vec<usize>,
    pub provenance: Vec<PartitionTag>,
}

impl EpochPlan {
    fn whole(strategy: Strategy, batch_size: usize, order: Vec<usize>) -> Self {
        let provenance = vec![PartitionTag::Whole; order.len()];
        EpochPlan {
            strategy,
            seed: None,
            epoch: 0,
            batch_size,
            order,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn batches(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size.max(1))
    }

    /// True when `order` holds each of `0..n` exactly once.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        sorted.len() == n && sorted.iter().enumerate().all(|(i, &id)| i == id)
    }
}

#[derive(Serialize)]
struct PlanRecord {
    epoch: usize,
    position: usize,
    example_id: usize,
    partition_tag: &'static str,
}

/// One `{epoch, position, example_id, partition_tag}` line per position.
pub fn write_plan_jsonl<W: Write>(plans: &[EpochPlan], mut out: W) -> Result<()> {
    for plan in plans {
        for (position, (&example_id, tag)) in plan.order.iter().zip(&plan.provenance).enumerate() {
            let rec = PlanRecord {
                epoch: plan.epoch,
                position,
                example_id,
                partition_tag: tag.name(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(serde_json::Error::io)?;
        }
    }
    Ok(())
}

fn expect_direction(strategy: Strategy, ranked: &RankedList) -> Result<()> {
    let expected = strategy.direction().expect("curriculum strategy");
    if ranked.direction != expected {
        return Err(Error::DirectionMismatch {
            strategy: strategy.name(),
            expected: expected.name(),
            got: ranked.direction.name(),
        });
    }
    Ok(())
}

/// E2D walks the descending ranking, D2E the ascending one, verbatim.
pub fn sequential_plan(
    ranked: &RankedList,
    which: Strategy,
    batch_size: usize,
) -> Result<EpochPlan> {
    if !matches!(which, Strategy::E2D | Strategy::D2E) {
        return Err(Error::InvalidConfig(format!(
            "{which} is not a sequential strategy"
        )));
    }
    expect_direction(which, ranked)?;
    Ok(EpochPlan::whole(which, batch_size, ranked.order.clone()))
}

/// SME/SMD: square-law weights by rank, then a weighted permutation.
pub fn probability_plan<R: Rng + ?Sized>(
    ranked: &RankedList,
    which: Strategy,
    batch_size: usize,
    rng: &mut R,
) -> Result<EpochPlan> {
    if !matches!(which, Strategy::SME | Strategy::SMD) {
        return Err(Error::InvalidConfig(format!(
            "{which} is not a probability strategy"
        )));
    }
    expect_direction(which, ranked)?;
    let rw = rank_weights(ranked.len(), RankLaw::Square)?;
    let mut by_id = vec![0.0; ranked.len()];
    for (pos, &id) in ranked.order.iter().enumerate() {
        by_id[id] = rw.weights[pos];
    }
    let order = weighted_permutation(&by_id, rng)?;
    Ok(EpochPlan::whole(which, batch_size, order))
}

/// Default partition sizes for a batch of `batch_size`: 9 of 16 to the
/// first partition, rounded up.
pub fn default_split(batch_size: usize) -> (usize, usize) {
    let b1 = ragged_b1(batch_size, 9, 16);
    (b1, batch_size - b1)
}

fn ragged_b1(remaining: usize, b1: usize, batch_size: usize) -> usize {
    (remaining * b1).div_ceil(batch_size)
}

/// Binary indexed tree over exact integer weights, supporting weighted
/// draws and removal.
struct WeightTree {
    tree: Vec<u64>,
    values: Vec<u64>,
}

impl WeightTree {
    fn new(values: Vec<u64>) -> Self {
        let n = values.len();
        let mut tree = vec![0u64; n + 1];
        for (i, &v) in values.iter().enumerate() {
            let mut j = i + 1;
            while j <= n {
                tree[j] += v;
                j += j & j.wrapping_neg();
            }
        }
        WeightTree { tree, values }
    }

    fn total(&self) -> u64 {
        let mut sum = 0;
        let mut j = self.values.len();
        while j > 0 {
            sum += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        sum
    }

    fn remove(&mut self, i: usize) {
        let v = std::mem::take(&mut self.values[i]);
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] -= v;
            j += j & j.wrapping_neg();
        }
    }

    /// Smallest position whose prefix sum exceeds `target`.
    fn find(&self, mut target: u64) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Shared pool for the partitioned strategies: both weight laws indexed by
/// rank position, with removal across partitions.
struct PartitionPool<'a> {
    ranked: &'a [usize],
    first: WeightTree,
    second: WeightTree,
    /// Remaining rank positions, ordered by example id for the zero-weight
    /// tail rule.
    remaining: BTreeSet<(usize, usize)>,
}

impl<'a> PartitionPool<'a> {
    fn new(ranked: &'a [usize]) -> Self {
        let n = ranked.len() as u64;
        let law = |l: RankLaw| (1..=n).map(|r| l.weight(r, n)).collect::<Vec<_>>();
        PartitionPool {
            ranked,
            first: WeightTree::new(law(RankLaw::Square)),
            second: WeightTree::new(law(RankLaw::ComplementSquare)),
            remaining: ranked
                .iter()
                .enumerate()
                .map(|(pos, &id)| (id, pos))
                .collect(),
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, tag: PartitionTag, rng: &mut R) -> usize {
        let tree = match tag {
            PartitionTag::B2 => &self.second,
            _ => &self.first,
        };
        let total = tree.total();
        let pos = if total > 0 {
            tree.find(rng.gen_range(0..total))
        } else {
            self.remaining.first().expect("pool not empty").1
        };
        self.first.remove(pos);
        self.second.remove(pos);
        self.remaining.remove(&(self.ranked[pos], pos));
        self.ranked[pos]
    }
}

/// PME/PMD: each batch takes `split.0` draws under the square law (B1),
/// then `split.1` draws under the complement law (B2), from one pool
/// shared across the whole epoch. A ragged final batch of `r` examples
/// gives `ceil(r * split.0 / batch_size)` to B1.
pub fn partitioned_plan<R: Rng + ?Sized>(
    ranked: &RankedList,
    which: Strategy,
    batch_size: usize,
    split: (usize, usize),
    rng: &mut R,
) -> Result<EpochPlan> {
    if !matches!(which, Strategy::PME | Strategy::PMD) {
        return Err(Error::InvalidConfig(format!(
            "{which} is not a partitioned strategy"
        )));
    }
    expect_direction(which, ranked)?;
    if split.0 + split.1 != batch_size || batch_size == 0 {
        return Err(Error::SplitMismatch {
            b1: split.0,
            b2: split.1,
            batch_size,
        });
    }
    if ranked.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tags = partition_pattern(ranked.len(), batch_size, split);
    let mut pool = PartitionPool::new(&ranked.order);
    let order = tags.iter().map(|&t| pool.draw(t, rng)).collect();
    Ok(EpochPlan {
        strategy: which,
        seed: None,
        epoch: 0,
        batch_size,
        order,
        provenance: tags,
    })
}

/// B1/B2 tags for `n` positions in batches of `batch_size`.
pub fn partition_pattern(n: usize, batch_size: usize, split: (usize, usize)) -> Vec<PartitionTag> {
    let mut tags = Vec::with_capacity(n);
    let mut left = n;
    while left > 0 {
        let size = left.min(batch_size);
        let b1 = if size == batch_size {
            split.0
        } else {
            ragged_b1(size, split.0, batch_size)
        };
        tags.extend(std::iter::repeat_n(PartitionTag::B1, b1));
        tags.extend(std::iter::repeat_n(PartitionTag::B2, size - b1));
        left -= size;
    }
    tags
}

/// Random is a uniform shuffle; Length orders by token count, ties by id.
pub fn baseline_plan<R: Rng + ?Sized>(
    n: usize,
    which: Strategy,
    lengths: Option<&TokenLengthIndex>,
    batch_size: usize,
    rng: &mut R,
) -> Result<EpochPlan> {
    let order = match which {
        Strategy::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order
        }
        Strategy::Length => {
            let lengths = lengths.ok_or_else(|| {
                Error::InvalidConfig("Length baseline requires token lengths".into())
            })?;
            if lengths.lengths.len() != n {
                return Err(Error::LengthMismatch {
                    what: "token lengths",
                    expected: n,
                    got: lengths.lengths.len(),
                });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (lengths.lengths[i], i));
            order
        }
        other => return Err(Error::InvalidConfig(format!("{other} is not a baseline"))),
    };
    Ok(EpochPlan::whole(which, batch_size, order))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub batch_size: usize,
    /// Partition sizes for PME/PMD; `None` uses [`default_split`].
    pub split: Option<(usize, usize)>,
    pub max_tokens: Option<usize>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            batch_size: 16,
            split: None,
            max_tokens: None,
        }
    }
}

impl PlanConfig {
    pub fn split(&self) -> (usize, usize) {
        self.split.unwrap_or_else(|| default_split(self.batch_size))
    }
}

/// Builds one epoch's plan for any strategy. `lengths` may be supplied to
/// avoid re-tokenizing for the Length baseline.
pub fn make_plan<R: Rng + ?Sized>(
    strategy: Strategy,
    scores: Option<&ScoreTable>,
    dataset: &Dataset,
    lengths: Option<&TokenLengthIndex>,
    config: &PlanConfig,
    rng: &mut R,
) -> Result<EpochPlan> {
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let n = dataset.len();
    let Some(direction) = strategy.direction() else {
        let computed;
        let lengths = match (strategy, lengths) {
            (Strategy::Length, None) => {
                computed = token_lengths(dataset, config.max_tokens);
                Some(&computed)
            }
            (_, l) => l,
        };
        return baseline_plan(n, strategy, lengths, config.batch_size, rng);
    };
    let scores = scores.ok_or(Error::MissingScores(strategy.name()))?;
    if scores.len() != n {
        return Err(Error::LengthMismatch {
            what: "score table",
            expected: n,
            got: scores.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let ranked = rank_examples(scores, direction);
    match strategy {
        Strategy::E2D | Strategy::D2E => sequential_plan(&ranked, strategy, config.batch_size),
        Strategy::SME | Strategy::SMD => {
            probability_plan(&ranked, strategy, config.batch_size, rng)
        }
        Strategy::PME | Strategy::PMD => {
            partitioned_plan(&ranked, strategy, config.batch_size, config.split(), rng)
        }
        Strategy::Random | Strategy::Length => unreachable!(),
    }
}
