use rand::Rng;

use crate::dataset_io::{Dataset, SplitTag, Subset};
use crate::error::{Error, Result};
use crate::samplers::{make_plan, PlanConfig, Strategy};
use crate::scoring::ScoreTable;

pub const FEW_SHOT_K: usize = 64;

/// Picks `k` training examples the way `strategy` would schedule them
/// first: the k easiest for E2D, the k hardest for D2E, the k shortest for
/// Length, a uniform sample for Random, and the first k weighted draws
/// (interleaved 9:7 for PME/PMD) for the probabilistic strategies.
///
/// The subset keeps parent order, so `k = N` reproduces the full split.
pub fn few_shot_select<R: Rng + ?Sized>(
    strategy: Strategy,
    scores: Option<&ScoreTable>,
    dataset: &Dataset,
    k: usize,
    config: &PlanConfig,
    rng: &mut R,
) -> Result<Subset> {
    if k > dataset.len() {
        return Err(Error::TooManyRequested {
            k,
            n: dataset.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("few-shot k must be at least 1".into()));
    }
    let plan = make_plan(strategy, scores, dataset, None, config, rng)?;
    let mut ids = plan.order[..k].to_vec();
    ids.sort_unstable();
    Ok(Subset {
        dataset: dataset.subset(&ids, SplitTag::Train),
        parent_ids: ids,
    })
}
