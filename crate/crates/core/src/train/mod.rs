//! Two-stage training: tag-conditioned denoiser fine-tuning, then adapter
//! training against the frozen denoiser.

pub mod checkpoint;
mod config;
pub mod dataset;
pub mod log;
pub mod optim;
pub mod stage1;
pub mod stage2;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, CheckpointKind, CheckpointMeta, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use dataset::{Batch, TrainItem, TrainingSet};
pub use log::{LossLog, LossRecord};
pub use optim::{AdamW, AdamWConfig};
pub use stage1::{init_denoiser, train_stage1, Stage1Trainer};
pub use stage2::{init_from_stage1, train_stage2, Stage2Trainer};

use crate::error::{Error, Result};

/// Seed streams derived from the run seed.
pub mod streams {
    pub const DENOISER: u64 = 1;
    pub const STAGE1: u64 = 2;
    pub const ADAPTER: u64 = 3;
    pub const DISC: u64 = 4;
    pub const STAGE2: u64 = 5;
    pub const DATA: u64 = 6;
    pub const DEGRADE: u64 = 7;
}

/// `n` timesteps drawn uniformly from `[0, steps)`.
pub fn sample_timesteps(rng: &mut ChaCha8Rng, steps: usize, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..steps)).collect()
}

/// Batch indices drawn uniformly with replacement.
pub fn draw_indices(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..len)).collect()
}

fn ensure_finite(iteration: u64, terms: &[(&str, f64)], ts: &[usize]) -> Result<()> {
    if terms.iter().all(|(_, v)| v.is_finite()) {
        return Ok(());
    }
    let detail = terms.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ");
    Err(Error::TrainingAborted { iteration, reason: format!("non-finite loss ({detail}) at timesteps {ts:?}") })
}

/// Numeric-domain failures inside a step become an abort at that iteration.
fn abort_on_numeric(iteration: u64, e: Error) -> Error {
    match e {
        Error::NumericDomain(reason) => Error::TrainingAborted { iteration, reason },
        e => e,
    }
}
