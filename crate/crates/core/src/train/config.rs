//! Training configuration.

use crate::error::{Error, Result};
use crate::prior::PriorKind;
use crate::train::adam::AdamConfig;

/// Optimizer, architecture, and loop settings for one training run.
///
/// `second_moment_decay` uses the EMA-decay convention directly (default
/// 0.99). Configs written in the raw "beta2 = 0.01" style map to
/// `1 - beta2`; the CLI layer accepts either spelling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub second_moment_decay: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub prior: PriorKind,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    /// Global-norm gradient clipping; `None` disables it.
    pub clip_norm: Option<f64>,
    /// Worker threads for batch-parallel loss evaluation. Results are
    /// bitwise identical for any value.
    pub workers: usize,
    /// Write `epoch_<k>.ckpt` every this many epochs; 0 disables them.
    pub checkpoint_every: usize,
    pub save_optimizer_state: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            second_moment_decay: 0.99,
            epsilon: 1e-4,
            lambda: 1.0,
            batch_size: 256,
            max_epochs: 50,
            seed: 0,
            prior: PriorKind::Logistic,
            hidden_layers: 2,
            hidden_units: 32,
            clip_norm: None,
            workers: 1,
            checkpoint_every: 0,
            save_optimizer_state: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("second_moment_decay", self.second_moment_decay),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.hidden_layers == 0 || self.hidden_units == 0 {
            return Err(Error::Config(
                "hidden_layers and hidden_units must be at least 1".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            second_moment_decay: self.second_moment_decay,
            epsilon: self.epsilon,
            lambda: self.lambda,
        }
    }
}
