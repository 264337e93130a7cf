//! Synthetic text-classification corpora for tests and demos.

use rand::Rng;

use crate::dataset_io::{Dataset, Example, SplitTag};
use crate::rng::{stream, Purpose};

/// Knobs for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub size: usize,
    pub class_count: usize,
    /// Words reserved for each class.
    pub class_vocab: usize,
    /// Words shared by all classes. Zero gives disjoint vocabularies.
    pub shared_vocab: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a gold label is replaced by a different class.
    pub label_noise: f64,
}

impl CorpusSpec {
    /// Balanced, linearly separable: every token belongs to its class.
    pub fn separable(size: usize) -> Self {
        CorpusSpec {
            size,
            class_count: 2,
            class_vocab: 40,
            shared_vocab: 0,
            min_tokens: 4,
            max_tokens: 12,
            label_noise: 0.0,
        }
    }

    /// Examples whose share of class-specific words is drawn uniformly, so
    /// difficulty varies from near-random to obvious, plus label noise.
    pub fn graded(size: usize, label_noise: f64) -> Self {
        CorpusSpec {
            size,
            class_count: 2,
            class_vocab: 40,
            shared_vocab: 200,
            min_tokens: 6,
            max_tokens: 16,
            label_noise,
        }
    }
}

/// Generates `spec.size` examples with balanced (round-robin) true
/// classes. Deterministic in `seed`.
pub fn generate(spec: &CorpusSpec, seed: u64) -> Dataset {
    let mut rng = stream(seed, Purpose::Split, 0xC0);
    let examples = (0..spec.size)
        .map(|id| {
            let class = id % spec.class_count;
            let len = rng.gen_range(spec.min_tokens..=spec.max_tokens);
            let clarity: f64 = if spec.shared_vocab == 0 {
                1.0
            } else {
                rng.gen()
            };
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen::<f64>() < clarity {
                        format!("c{class}w{}", rng.gen_range(0..spec.class_vocab))
                    } else {
                        format!("s{}", rng.gen_range(0..spec.shared_vocab))
                    }
                })
                .collect();
            let label = if spec.label_noise > 0.0 && rng.gen::<f64>() < spec.label_noise {
                (class + rng.gen_range(1..spec.class_count)) % spec.class_count
            } else {
                class
            };
            Example {
                id,
                text: words.join(" "),
                text_pair: None,
                label,
            }
        })
        .collect();
    Dataset::new(examples, spec.class_count, None, SplitTag::Train)
        .expect("generated labels are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = generate(&CorpusSpec::separable(100), 3);
        assert_eq!(a, generate(&CorpusSpec::separable(100), 3));
        assert_eq!(a.class_counts(), [50, 50]);
        assert!(a.examples[0].text.split(' ').all(|w| w.starts_with("c0")));
    }

    #[test]
    fn noise_flips_roughly_the_requested_share() {
        let d = generate(&CorpusSpec::graded(4000, 0.1), 1);
        let flipped = d.examples.iter().filter(|e| e.label != e.id % 2).count();
        assert!((flipped as f64 / 4000.0 - 0.1).abs() < 0.02);
    }
}
