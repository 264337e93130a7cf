//! Hashed bag-of-words softmax regression: the self-contained classifier
//! that supplies class probabilities and a fine-tunable model for
//! desk-scale runs.

mod checkpoint;
mod features;
mod model;
mod optim;
mod probe;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use features::{fnv1a64, FeatureVector, Featurizer};
pub use model::{loss_and_grad, softmax, Gradient, LinearModel, ModelProvider};
pub use optim::{lr_at, optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use probe::{build_probe_scorer, probe_subset, ProbeSettings};
