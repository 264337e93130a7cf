use serde::{Deserialize, Serialize};

use crate::dataset_io::{example_tokens, Example};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Sparse term-frequency vector over hashed feature ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

/// Hashing-trick featurizer. Text tokens are hashed as `p:<token>` and
/// pair tokens as `h:<token>`, then masked to `dim` (a power of two).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub dim: usize,
    pub max_tokens: Option<usize>,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer {
            dim: 1 << 16,
            max_tokens: None,
        }
    }
}

impl Featurizer {
    pub fn new(dim: usize, max_tokens: Option<usize>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Featurizer { dim, max_tokens })
    }

    pub fn featurize(&self, example: &Example) -> FeatureVector {
        let (text, pair) = example_tokens(example, self.max_tokens);
        let mask = (self.dim - 1) as u64;
        let mut ids: Vec<usize> = Vec::with_capacity(text.len() + pair.len());
        let mut buf = String::new();
        for (prefix, tokens) in [("p:", &text), ("h:", &pair)] {
            for tok in tokens {
                buf.clear();
                buf.push_str(prefix);
                buf.push_str(tok);
                ids.push((fnv1a64(buf.as_bytes()) & mask) as usize);
            }
        }
        ids.sort_unstable();
        let mut fv = FeatureVector::default();
        for id in ids {
            match fv.indices.last() {
                Some(&last) if last == id => *fv.values.last_mut().unwrap() += 1.0,
                _ => {
                    fv.indices.push(id);
                    fv.values.push(1.0);
                }
            }
        }
        fv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(text: &str, pair: Option<&str>) -> Example {
        Example {
            id: 0,
            text: text.into(),
            text_pair: pair.map(Into::into),
            label: 0,
        }
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn counts_repeated_tokens() {
        let f = Featurizer::default();
        let fv = f.featurize(&ex("a a b", None));
        assert_eq!(fv.len(), 2);
        let mut vals = fv.values.clone();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, [1.0, 2.0]);
        assert!(fv.indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(fv, f.featurize(&ex("a a b", None)));
    }

    #[test]
    fn pair_namespaces_are_distinct() {
        let fv = Featurizer::default().featurize(&ex("a", Some("a")));
        assert_eq!(fv.len(), 2);
        assert_eq!(fv.values, [1.0, 1.0]);
    }

    #[test]
    fn empty_text_and_bad_dim() {
        assert!(Featurizer::default().featurize(&ex("", None)).is_empty());
        assert!(Featurizer::new(100, None).is_err());
        let small = Featurizer::new(4, None).unwrap();
        let fv = small.featurize(&ex("one two three four five six", None));
        assert!(fv.indices.iter().all(|&i| i < 4));
        assert_eq!(fv.values.iter().sum::<f64>(), 6.0);
    }
}
