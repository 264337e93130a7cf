use crate::dataset_io::Dataset;
use crate::error::{Error, Result};
use crate::scoring::{score_dataset, score_histogram, HistogramReport, ProbabilityProvider};

/// Re-scores `dataset` with each `(epoch_tag, provider)` snapshot and bins
/// the scores, split by whether that snapshot's argmax matches the gold
/// label. Tag 0 is conventionally the pre-training provider.
pub fn rescore_analysis(
    snapshots: &[(usize, &dyn ProbabilityProvider)],
    dataset: &Dataset,
    bins: usize,
) -> Result<Vec<HistogramReport>> {
    if snapshots.is_empty() {
        return Err(Error::NoSnapshots);
    }
    let gold = dataset.labels();
    snapshots
        .iter()
        .map(|&(tag, provider)| {
            let table = score_dataset(provider, dataset)?;
            let predicted = table.predicted_labels();
            score_histogram(&table, Some((&predicted, &gold)), bins, tag)
        })
        .collect()
}
