//! Self-adaptive curriculum learning at desk scale.
//!
//! Examples are scored by the confidence margin of a classifier, ranked,
//! and replayed to a training loop under one of six curriculum strategies
//! or two baselines. A hashed bag-of-words softmax regression stands in for
//! a pre-trained language model so the whole pipeline runs without a
//! neural framework.

pub mod dataset_io;
pub mod error;
pub mod rng;
pub mod samplers;
pub mod scoring;
pub mod synthetic;
pub mod toy_model;
pub mod trainer;

pub use error::{Error, Result};
