use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::Dataset;
use crate::error::{Error, Result};
use crate::toy_model::LinearModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Accuracy plus macro-averaged precision, recall and F1.
///
/// A class that is never predicted has precision 0; a class with no
/// support has recall 0; F1 is 0 whenever precision + recall is 0. Every
/// class counts equally in the macro mean, including zero-support ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub total: usize,
}

pub fn compute_metrics(predicted: &[usize], gold: &[usize], class_count: usize) -> Result<Metrics> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: gold.len(),
            got: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut tp = vec![0usize; class_count];
    let mut predicted_count = vec![0usize; class_count];
    let mut support = vec![0usize; class_count];
    for (&p, &g) in predicted.iter().zip(gold) {
        predicted_count[p] += 1;
        support[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let per_class: Vec<ClassMetrics> = (0..class_count)
        .map(|c| {
            let precision = ratio(tp[c], predicted_count[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    let mean =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / class_count as f64;
    Ok(Metrics {
        accuracy: ratio(tp.iter().sum(), gold.len()),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        total: gold.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub loss: f64,
}

/// Metrics and mean cross-entropy of `model` on `split`. Examples are
/// scored in parallel; the loss is summed in id order.
pub fn evaluate(model: &LinearModel, split: &Dataset) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if split.class_count != model.class_count {
        return Err(Error::LengthMismatch {
            what: "model classes",
            expected: split.class_count,
            got: model.class_count,
        });
    }
    let per_example: Vec<(usize, f64)> = split
        .examples
        .par_iter()
        .map(|ex| {
            let (label, dist) = model.predict(ex);
            (label, -dist.probs()[ex.label].max(f64::MIN_POSITIVE).ln())
        })
        .collect();
    let predicted: Vec<usize> = per_example.iter().map(|p| p.0).collect();
    let loss = per_example.iter().map(|p| p.1).sum::<f64>() / split.len() as f64;
    Ok(Evaluation {
        metrics: compute_metrics(&predicted, &split.labels(), split.class_count)?,
        loss,
    })
}
