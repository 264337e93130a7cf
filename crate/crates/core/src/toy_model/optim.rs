use serde::{Deserialize, Serialize};

use super::model::{Gradient, LinearModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

impl OptimizerKind {
    /// Desk-scale defaults for the hashed linear model.
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.1,
            OptimizerKind::AdamW => 0.01,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimizer {other:?} (expected sgd or adamw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            lr: kind.default_lr(),
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd() -> Self {
        Self::new(OptimizerKind::Sgd)
    }

    pub fn adamw() -> Self {
        Self::new(OptimizerKind::AdamW)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("optimizer.lr must be finite and non-negative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("optimizer.weight_decay must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("optimizer betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("optimizer.epsilon must be positive");
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adamw()
    }
}

/// Optimizer with a linear decay-to-zero schedule and no warm-up.
///
/// Moments are laid out as all weights (row-major) followed by the bias.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub total_steps: u64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    scratch: Vec<f64>,
}

impl PartialEq for OptimizerState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.total_steps == other.total_steps
            && self.step == other.step
            && self.first_moment == other.first_moment
            && self.second_moment == other.second_moment
    }
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, model: &LinearModel, total_steps: u64) -> Self {
        let n = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::AdamW => model.weights.len() + model.bias.len(),
        };
        OptimizerState {
            config,
            total_steps: total_steps.max(1),
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            scratch: Vec::new(),
        }
    }

    pub(crate) fn restore(
        config: OptimizerConfig,
        total_steps: u64,
        step: u64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
    ) -> Self {
        OptimizerState {
            config,
            total_steps,
            step,
            first_moment,
            second_moment,
            scratch: Vec::new(),
        }
    }

    /// Learning rate applied by the next update.
    pub fn current_lr(&self) -> f64 {
        lr_at(self.config.lr, self.step, self.total_steps)
    }
}

/// `base * max(0, 1 - step / total)`.
pub fn lr_at(base: f64, step: u64, total_steps: u64) -> f64 {
    base * (1.0 - step as f64 / total_steps as f64).max(0.0)
}

/// Applies one update and advances the step counter.
pub fn optimizer_step(
    model: &mut LinearModel,
    grad: &Gradient,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient { step: state.step });
    }
    let lr = state.current_lr();
    let cfg = state.config;
    match cfg.kind {
        OptimizerKind::Sgd => {
            if cfg.weight_decay > 0.0 {
                let keep = 1.0 - lr * cfg.weight_decay;
                model
                    .weights
                    .iter_mut()
                    .chain(model.bias.iter_mut())
                    .for_each(|w| *w *= keep);
            }
            for (&feature, col) in &grad.features {
                for (c, g) in col.iter().enumerate() {
                    *model.weight_mut(c, feature) -= lr * g;
                }
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
        }
        OptimizerKind::AdamW => {
            let d = model.dim();
            let n_weights = model.weights.len();
            let dense = &mut state.scratch;
            dense.clear();
            dense.resize(n_weights + model.bias.len(), 0.0);
            for (&feature, col) in &grad.features {
                for (c, g) in col.iter().enumerate() {
                    dense[c * d + feature] = *g;
                }
            }
            dense[n_weights..].copy_from_slice(&grad.bias);

            let t = (state.step + 1) as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let decay = 1.0 - lr * cfg.weight_decay;
            let params = model.weights.iter_mut().chain(model.bias.iter_mut());
            for (((theta, g), m), v) in params
                .zip(dense.iter())
                .zip(state.first_moment.iter_mut())
                .zip(state.second_moment.iter_mut())
            {
                *theta *= decay;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
    state.step += 1;
    if !model.is_finite() {
        return Err(Error::NonFiniteGradient {
            step: state.step - 1,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_model::Featurizer;
    use std::collections::BTreeMap;

    fn model() -> LinearModel {
        LinearModel::zeros(Featurizer::new(4, None).unwrap(), 2)
    }

    fn grad_on(feature: usize, class: usize, g: f64) -> Gradient {
        let mut col = vec![0.0; 2];
        col[class] = g;
        Gradient {
            bias: vec![0.0; 2],
            features: BTreeMap::from([(feature, col)]),
        }
    }

    #[test]
    fn sgd_unit_step() {
        let mut m = model();
        let mut cfg = OptimizerConfig::sgd();
        cfg.lr = 1.0;
        let mut st = OptimizerState::new(cfg, &m, 1_000_000);
        // lr at step 0 is exactly the base rate.
        optimizer_step(&mut m, &grad_on(1, 0, 1.0), &mut st).unwrap();
        assert_eq!(m.weight(0, 1), -1.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adamw_first_step_is_about_lr() {
        let mut m = model();
        let cfg = OptimizerConfig::adamw();
        let mut st = OptimizerState::new(cfg, &m, 100);
        optimizer_step(&mut m, &grad_on(2, 1, 0.5), &mut st).unwrap();
        // m_hat = 0.5, v_hat = 0.25, so the step is lr * 0.5 / (0.5 + eps).
        let want = -cfg.lr * 0.5 / (0.5 + cfg.epsilon);
        assert!((m.weight(1, 2) - want).abs() < 1e-15);
        assert!((m.weight(1, 2) + cfg.lr).abs() < 1e-9);
        // Untouched parameters stay at zero without weight decay.
        assert_eq!(m.weight(0, 2), 0.0);
    }

    #[test]
    fn adamw_decoupled_decay() {
        let mut m = model();
        *m.weight_mut(0, 0) = 2.0;
        let mut cfg = OptimizerConfig::adamw();
        cfg.weight_decay = 0.1;
        let mut st = OptimizerState::new(cfg, &m, 10);
        optimizer_step(&mut m, &grad_on(3, 0, 0.0), &mut st).unwrap();
        assert!((m.weight(0, 0) - 2.0 * (1.0 - cfg.lr * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn schedule_reaches_zero() {
        assert_eq!(lr_at(0.1, 0, 10), 0.1);
        assert!((lr_at(0.1, 5, 10) - 0.05).abs() < 1e-15);
        assert_eq!(lr_at(0.1, 10, 10), 0.0);
        assert_eq!(lr_at(0.1, 12, 10), 0.0);

        for kind in [OptimizerKind::Sgd, OptimizerKind::AdamW] {
            let mut m = model();
            let mut st = OptimizerState::new(OptimizerConfig::new(kind), &m, 3);
            st.step = 3;
            optimizer_step(&mut m, &grad_on(0, 0, 1.0), &mut st).unwrap();
            assert!(m.weights.iter().all(|&w| w == 0.0));
            assert_eq!(st.step, 4);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut m = model();
        let mut st = OptimizerState::new(OptimizerConfig::sgd(), &m, 10);
        let err = optimizer_step(&mut m, &grad_on(0, 0, f64::NAN), &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { step: 0 }));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn parse_kind() {
        assert_eq!(
            "AdamW".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::AdamW
        );
        assert!("adam".parse::<OptimizerKind>().is_err());
    }
}
