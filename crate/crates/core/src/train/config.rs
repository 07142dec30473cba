use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::optim::AdamWConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iters: u64,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub weight_decay: f64,
    /// Probability of replacing a sample's tags with the null prompt (stage 1).
    pub tag_dropout: f64,
    /// Discriminator learning rate (stage 2).
    pub disc_learning_rate: f64,
    /// Stage-1 checkpoint that initializes a stage-2 run.
    pub init_checkpoint: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 8,
            max_iters: 1000,
            checkpoint_every: 0,
            weight_decay: 1e-2,
            tag_dropout: 0.1,
            disc_learning_rate: 2e-4,
            init_checkpoint: None,
        }
    }

    pub fn stage2() -> Self {
        Self { learning_rate: 2e-4, max_iters: 500, tag_dropout: 0.0, ..Self::stage1() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.disc_learning_rate > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tag_dropout) {
            return Err(invalid("tag_dropout must lie in [0, 1]"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { lr: self.learning_rate, weight_decay: self.weight_decay, ..Default::default() }
    }

    pub fn disc_optimizer(&self) -> AdamWConfig {
        AdamWConfig { lr: self.disc_learning_rate, weight_decay: 0.0, beta1: 0.5, ..Default::default() }
    }
}
