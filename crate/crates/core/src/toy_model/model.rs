use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer};
use crate::dataset_io::Example;
use crate::error::{Error, Result};
use crate::scoring::{ClassDistribution, ProbabilityProvider, ScoreSource};

/// Softmax regression over hashed features: `C x D` weights plus a bias
/// per class. Weights are stored row-major, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub featurizer: Featurizer,
    pub class_count: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(featurizer: Featurizer, class_count: usize) -> Self {
        LinearModel {
            featurizer,
            class_count,
            weights: vec![0.0; class_count * featurizer.dim],
            bias: vec![0.0; class_count],
        }
    }

    pub fn dim(&self) -> usize {
        self.featurizer.dim
    }

    #[inline]
    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[class * self.dim() + feature]
    }

    #[inline]
    pub fn weight_mut(&mut self, class: usize, feature: usize) -> &mut f64 {
        let d = self.dim();
        &mut self.weights[class * d + feature]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|w| w.is_finite())
    }

    pub fn forward(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        if let Some(&bad) = features.indices.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::FeatureOutOfRange {
                index: bad,
                dim: self.dim(),
            });
        }
        Ok(self.logits(features))
    }

    fn logits(&self, features: &FeatureVector) -> Vec<f64> {
        (0..self.class_count)
            .map(|c| {
                let row = &self.weights[c * self.dim()..(c + 1) * self.dim()];
                self.bias[c] + features.iter().map(|(i, v)| row[i] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn distribution(&self, example: &Example) -> ClassDistribution {
        softmax(&self.logits(&self.featurizer.featurize(example)))
    }

    /// Argmax label (lowest index on ties) and the full distribution.
    pub fn predict(&self, example: &Example) -> (usize, ClassDistribution) {
        let dist = self.distribution(example);
        (dist.argmax(), dist)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> ClassDistribution {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ClassDistribution::from_normalized_unchecked(exps.into_iter().map(|e| e / sum).collect())
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Gradient of the mean loss. Only feature columns touched by the batch are
/// stored; each entry holds one value per class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient {
    pub bias: Vec<f64>,
    pub features: BTreeMap<usize, Vec<f64>>,
}

impl Gradient {
    pub fn is_finite(&self) -> bool {
        self.bias.iter().all(|g| g.is_finite())
            && self.features.values().flatten().all(|g| g.is_finite())
    }
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_grad(model: &LinearModel, batch: &[(&FeatureVector, usize)]) -> (f64, Gradient) {
    let c = model.class_count;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = Gradient {
        bias: vec![0.0; c],
        features: BTreeMap::new(),
    };
    let mut loss = 0.0;
    for &(fv, gold) in batch {
        let logits = model.logits(fv);
        loss += log_sum_exp(&logits) - logits[gold];
        let dist = softmax(&logits);
        let delta: Vec<f64> = dist
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &p)| (p - if k == gold { 1.0 } else { 0.0 }) * scale)
            .collect();
        for (k, d) in delta.iter().enumerate() {
            grad.bias[k] += d;
        }
        for (idx, v) in fv.iter() {
            let col = grad.features.entry(idx).or_insert_with(|| vec![0.0; c]);
            for (k, d) in delta.iter().enumerate() {
                col[k] += d * v;
            }
        }
    }
    (loss * scale, grad)
}

/// A frozen model serving class probabilities.
#[derive(Debug, Clone)]
pub struct ModelProvider {
    pub model: LinearModel,
    pub source: ScoreSource,
}

impl ProbabilityProvider for ModelProvider {
    fn class_count(&self) -> usize {
        self.model.class_count
    }

    fn distribution(&self, example: &Example) -> Result<ClassDistribution> {
        Ok(self.model.distribution(example))
    }

    fn source(&self) -> ScoreSource {
        self.source
    }
}
