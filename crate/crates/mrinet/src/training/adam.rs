use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Adam hyperparameters. Defaults follow the standard recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config {
                what: format!("learning rate must be positive, got {}", self.learning_rate),
            });
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config { what: format!("{name} must be in [0, 1), got {b}") });
            }
        }
        Ok(())
    }
}

/// Per-parameter first/second moment plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        AdamState { m: Tensor::zeros(shape), v: Tensor::zeros(shape), t: 0 }
    }
}

/// One bias-corrected Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
///
/// The element update order is fixed, so trajectories are bitwise
/// reproducible. A non-finite gradient halts training rather than poisoning
/// the parameters.
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(Error::Dimension {
            op: "adam_step",
            axis: "parameter/gradient/state shapes",
            expected: param.len(),
            got: grad.len(),
        });
    }
    if grad.has_non_finite() {
        return Err(Error::TrainingHalt { what: "non-finite gradient in adam_step".into() });
    }
    state.t += 1;
    let lr = T::from_f64(cfg.learning_rate);
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let eps = T::from_f64(cfg.epsilon);
    let one = T::one();
    let bc1 = one - b1.powi(state.t as i32);
    let bc2 = one - b2.powi(state.t as i32);
    let (p, m, v) = (param.data_mut(), state.m.data_mut(), state.v.data_mut());
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Serializable copy of the optimizer state (for checkpoints).
#[derive(Debug, Clone)]
pub struct AdamSnapshot {
    pub t: u64,
    pub m: BTreeMap<String, Tensor<f32>>,
    pub v: BTreeMap<String, Tensor<f32>>,
}

/// Named-parameter Adam: one [`AdamState`] per slot, created lazily.
#[derive(Debug, Clone)]
pub struct AdamOptimizer<T: Scalar> {
    pub config: AdamConfig,
    states: BTreeMap<String, AdamState<T>>,
}

impl<T: Scalar> AdamOptimizer<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamOptimizer { config, states: BTreeMap::new() }
    }

    pub fn step_param(&mut self, name: &str, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        let state = self
            .states
            .entry(name.to_string())
            .or_insert_with(|| AdamState::zeros(param.shape()));
        adam_step(param, grad, state, &self.config).map_err(|e| match e {
            Error::TrainingHalt { .. } => {
                Error::TrainingHalt { what: format!("non-finite gradient for parameter {name}") }
            }
            other => other,
        })
    }

    pub fn state(&self, name: &str) -> Option<&AdamState<T>> {
        self.states.get(name)
    }
}

impl AdamOptimizer<f32> {
    pub fn snapshot(&self) -> AdamSnapshot {
        let t = self.states.values().map(|s| s.t).max().unwrap_or(0);
        AdamSnapshot {
            t,
            m: self.states.iter().map(|(k, s)| (k.clone(), s.m.clone())).collect(),
            v: self.states.iter().map(|(k, s)| (k.clone(), s.v.clone())).collect(),
        }
    }

    pub fn restore(config: AdamConfig, snapshot: &AdamSnapshot) -> Result<Self> {
        let mut states = BTreeMap::new();
        for (name, m) in &snapshot.m {
            let v = snapshot.v.get(name).ok_or_else(|| Error::Checkpoint {
                what: format!("optimizer state for {name} is missing its second moment"),
            })?;
            states.insert(name.clone(), AdamState { m: m.clone(), v: v.clone(), t: snapshot.t });
        }
        Ok(AdamOptimizer { config, states })
    }
}
