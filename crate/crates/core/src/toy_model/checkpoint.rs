use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::Featurizer;
use super::model::LinearModel;
use super::optim::{OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "curriculum-linear-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model container. Dense vectors are stored sparsely as
/// `(index, value)` pairs of the non-zero entries, so a freshly hashed
/// model with a handful of active features stays small.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dim: usize,
    class_count: usize,
    max_tokens: Option<usize>,
    weights: Vec<(usize, f64)>,
    bias: Vec<f64>,
    optimizer: Option<OptimizerSection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerSection {
    config: OptimizerConfig,
    total_steps: u64,
    step: u64,
    moment_len: usize,
    first_moment: Vec<(usize, f64)>,
    second_moment: Vec<(usize, f64)>,
}

fn to_sparse(dense: &[f64]) -> Vec<(usize, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| v.to_bits() != 0)
        .map(|(i, &v)| (i, v))
        .collect()
}

fn from_sparse(len: usize, entries: &[(usize, f64)], what: &str) -> Result<Vec<f64>> {
    let mut dense = vec![0.0; len];
    for &(i, v) in entries {
        *dense.get_mut(i).ok_or_else(|| {
            Error::InvalidConfig(format!("checkpoint {what} index {i} out of range {len}"))
        })? = v;
    }
    Ok(dense)
}

pub fn save_checkpoint(
    path: &Path,
    model: &LinearModel,
    optimizer: Option<&OptimizerState>,
) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dim: model.dim(),
        class_count: model.class_count,
        max_tokens: model.featurizer.max_tokens,
        weights: to_sparse(&model.weights),
        bias: model.bias.clone(),
        optimizer: optimizer.map(|st| OptimizerSection {
            config: st.config,
            total_steps: st.total_steps,
            step: st.step,
            moment_len: st.first_moment.len(),
            first_moment: to_sparse(&st.first_moment),
            second_moment: to_sparse(&st.second_moment),
        }),
    };
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    serde_json::to_writer(&mut out, &file)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(LinearModel, Option<OptimizerState>)> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let file: CheckpointFile = serde_json::from_reader(reader)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    if file.bias.len() != file.class_count {
        return Err(Error::LengthMismatch {
            what: "checkpoint bias",
            expected: file.class_count,
            got: file.bias.len(),
        });
    }
    let featurizer = Featurizer::new(file.dim, file.max_tokens)?;
    let model = LinearModel {
        featurizer,
        class_count: file.class_count,
        weights: from_sparse(file.dim * file.class_count, &file.weights, "weight")?,
        bias: file.bias,
    };
    let optimizer = file
        .optimizer
        .map(|o| -> Result<OptimizerState> {
            Ok(OptimizerState::restore(
                o.config,
                o.total_steps,
                o.step,
                from_sparse(o.moment_len, &o.first_moment, "moment")?,
                from_sparse(o.moment_len, &o.second_moment, "moment")?,
            ))
        })
        .transpose()?;
    Ok((model, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_model::{loss_and_grad, optimizer_step, FeatureVector};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut model = LinearModel::zeros(Featurizer::new(64, Some(7)).unwrap(), 3);
        let mut st = OptimizerState::new(OptimizerConfig::adamw(), &model, 50);
        let fv = FeatureVector {
            indices: vec![3, 17, 40],
            values: vec![1.0, 2.0, 1.0],
        };
        for label in [0, 2, 1, 2] {
            let (_, g) = loss_and_grad(&model, &[(&fv, label)]);
            optimizer_step(&mut model, &g, &mut st).unwrap();
        }
        model.bias[1] = -0.0;
        save_checkpoint(&path, &model, Some(&st)).unwrap();
        let (m2, st2) = load_checkpoint(&path).unwrap();
        assert_eq!(m2, model);
        assert!(m2
            .weights
            .iter()
            .zip(&model.weights)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(st2.unwrap(), st);

        save_checkpoint(&path, &model, None).unwrap();
        assert!(load_checkpoint(&path).unwrap().1.is_none());
    }
}
