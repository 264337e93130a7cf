use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer};
use super::model::{loss_and_grad, LinearModel, ModelProvider};
use super::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::dataset_io::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::scoring::ScoreSource;

/// Settings for the throwaway probe model that supplies initial
/// confidence scores when no external probability file is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub featurizer: Featurizer,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            fraction: 0.1,
            epochs: 1,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            featurizer: Featurizer::default(),
        }
    }
}

/// Per-class random sample of roughly `fraction` of each class (at least
/// one example per class), returned as sorted parent ids.
pub fn probe_subset<R: Rng>(dataset: &Dataset, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "probe fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let wanted = (fraction * dataset.len() as f64).round() as usize;
    if wanted < dataset.class_count {
        return Err(Error::InvalidConfig(format!(
            "probe subset of {wanted} examples is smaller than one example per class ({})",
            dataset.class_count
        )));
    }
    let mut by_class = vec![Vec::new(); dataset.class_count];
    for ex in &dataset.examples {
        by_class[ex.label].push(ex.id);
    }
    let mut ids = Vec::with_capacity(wanted);
    for members in &mut by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        ids.extend_from_slice(&members[..take]);
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Trains a fresh model on a stratified probe subset and freezes it as a
/// probability provider. The probe never shares parameters with the main
/// training run.
pub fn build_probe_scorer(
    dataset: &Dataset,
    settings: &ProbeSettings,
    seed: u64,
) -> Result<ModelProvider> {
    let mut rng = stream(seed, Purpose::Probe, 0);
    let ids = probe_subset(dataset, settings.fraction, &mut rng)?;
    let features: Vec<(FeatureVector, usize)> = ids
        .iter()
        .map(|&i| {
            let ex = &dataset.examples[i];
            (settings.featurizer.featurize(ex), ex.label)
        })
        .collect();

    let mut model = LinearModel::zeros(settings.featurizer, dataset.class_count);
    let batch_size = settings.batch_size.max(1);
    let steps_per_epoch = features.len().div_ceil(batch_size);
    let mut opt = OptimizerState::new(
        settings.optimizer,
        &model,
        (steps_per_epoch * settings.epochs) as u64,
    );
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&FeatureVector, usize)> = chunk
                .iter()
                .map(|&i| (&features[i].0, features[i].1))
                .collect();
            let (_, grad) = loss_and_grad(&model, &batch);
            optimizer_step(&mut model, &grad, &mut opt)?;
        }
    }
    Ok(ModelProvider {
        model,
        source: ScoreSource::ProbeModel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{Example, SplitTag};
    use crate::scoring::score_dataset;

    fn separable(n: usize) -> Dataset {
        let examples = (0..n)
            .map(|id| {
                let label = id % 2;
                let text = (0..6)
                    .map(|k| format!("c{label}w{}", (id * 7 + k * 3) % 25))
                    .collect::<Vec<_>>()
                    .join(" ");
                Example {
                    id,
                    text,
                    text_pair: None,
                    label,
                }
            })
            .collect();
        Dataset::new(examples, 2, None, SplitTag::Train).unwrap()
    }

    #[test]
    fn untrained_probe_scores_zero() {
        let ds = separable(100);
        let settings = ProbeSettings {
            epochs: 0,
            ..Default::default()
        };
        let probe = build_probe_scorer(&ds, &settings, 66).unwrap();
        let table = score_dataset(&probe, &ds).unwrap();
        assert!(table.scores.iter().all(|&s| s == 0.0));
        assert_eq!(table.source, ScoreSource::ProbeModel);
    }

    #[test]
    fn probe_scores_are_non_degenerate() {
        let ds = separable(400);
        let probe = build_probe_scorer(&ds, &ProbeSettings::default(), 66).unwrap();
        let t = score_dataset(&probe, &ds).unwrap();
        let mean = t.mean_score();
        let var = t.scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / t.len() as f64;
        assert!(var > 0.0);
    }

    #[test]
    fn full_probe_converges_to_confident() {
        let ds = separable(200);
        let settings = ProbeSettings {
            fraction: 1.0,
            epochs: 30,
            ..Default::default()
        };
        let probe = build_probe_scorer(&ds, &settings, 1).unwrap();
        let t = score_dataset(&probe, &ds).unwrap();
        let near_one = t.scores.iter().filter(|&&s| s > 0.9).count();
        assert!(near_one as f64 > 0.9 * ds.len() as f64, "{near_one}");
    }

    #[test]
    fn probe_subset_rules() {
        let ds = separable(100);
        let mut rng = stream(3, Purpose::Probe, 0);
        let ids = probe_subset(&ds, 0.1, &mut rng).unwrap();
        assert_eq!(ids.len(), 10);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(probe_subset(&ds, 0.01, &mut rng).is_err());
        assert!(probe_subset(&ds, 0.0, &mut rng).is_err());
        assert!(probe_subset(&ds, 1.5, &mut rng).is_err());
    }

    #[test]
    fn probe_is_seed_deterministic() {
        let ds = separable(300);
        let a = build_probe_scorer(&ds, &ProbeSettings::default(), 9).unwrap();
        let b = build_probe_scorer(&ds, &ProbeSettings::default(), 9).unwrap();
        assert_eq!(a.model, b.model);
    }
}
