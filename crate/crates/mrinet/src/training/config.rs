use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::arch::ModelKind;
use crate::data::{AugmentParams, PreprocessMode};
use crate::error::{Error, Result};

/// Whether backbone parameters receive optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneMode {
    #[default]
    Finetune,
    Frozen,
}

/// Batch-norm behavior while training: normalize by batch statistics
/// (updating the running averages) or keep using the running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnTrainMode {
    #[default]
    Batch,
    Running,
}

fn d_lr() -> f64 {
    1e-4
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_epsilon() -> f64 {
    1e-8
}
fn d_batch() -> usize {
    128
}
fn d_epochs() -> usize {
    50
}
fn d_input() -> (usize, usize) {
    (50, 50)
}

/// All training hyperparameters, seeds, and augmentation magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backbone_mode: BackboneMode,
    #[serde(default)]
    pub bn_mode: BnTrainMode,
    #[serde(default)]
    pub augment: AugmentParams,
    /// Defaults to the model's conventional normalization when omitted.
    #[serde(default)]
    pub preprocessing: Option<PreprocessMode>,
    #[serde(default = "d_input")]
    pub input_size: (usize, usize),
    /// The engine always runs kernels single-threaded, so results are bitwise
    /// reproducible either way; the flag is part of the stable interface and
    /// is echoed into reports.
    #[serde(default)]
    pub strict_deterministic: bool,
}

impl TrainConfig {
    /// Baseline configuration for a model (all defaults filled).
    pub fn for_model(model: ModelKind) -> Self {
        TrainConfig {
            model,
            learning_rate: d_lr(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            epsilon: d_epsilon(),
            batch_size: d_batch(),
            epochs: d_epochs(),
            seed: 0,
            backbone_mode: BackboneMode::default(),
            bn_mode: BnTrainMode::default(),
            augment: AugmentParams::default(),
            preprocessing: None,
            input_size: d_input(),
            strict_deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam_config().validate()?;
        if self.epochs == 0 {
            return Err(Error::Config { what: "epochs must be at least 1".into() });
        }
        if self.batch_size == 0 {
            return Err(Error::Config { what: "batch size must be at least 1".into() });
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::Config { what: "input size must be positive".into() });
        }
        self.augment.validate()
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// The preprocessing actually used: explicit choice, or the model default
    /// (channel-mean subtraction for the residual model, `[-1, 1]` scaling
    /// otherwise).
    pub fn effective_preprocessing(&self) -> PreprocessMode {
        self.preprocessing.unwrap_or(match self.model {
            ModelKind::Resnet50 => PreprocessMode::ResnetMeans,
            _ => PreprocessMode::ScalePm1,
        })
    }

    /// Copy with `preprocessing` resolved; this is what gets echoed next to
    /// run outputs and into checkpoints.
    pub fn effective(&self) -> TrainConfig {
        TrainConfig { preprocessing: Some(self.effective_preprocessing()), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_recipe() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"model":"resnet50"}"#).unwrap();
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.epochs, 50);
        assert_eq!(cfg.beta1, 0.9);
        assert_eq!(cfg.beta2, 0.999);
        assert_eq!(cfg.epsilon, 1e-8);
        assert_eq!(cfg.input_size, (50, 50));
        assert_eq!(cfg.effective_preprocessing(), PreprocessMode::ResnetMeans);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"model":"tinycnn","warmup":5}"#);
        assert!(err.is_err());
    }

    #[test]
    fn mobilenet_defaults_to_pm1_scaling() {
        let cfg = TrainConfig::for_model(ModelKind::Mobilenetv2);
        assert_eq!(cfg.effective_preprocessing(), PreprocessMode::ScalePm1);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = TrainConfig::for_model(ModelKind::Tinycnn);
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }
}
