//! Stage I: tag-conditioned noise-prediction fine-tuning of the denoiser.

use std::collections::BTreeMap;

use candle_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, CheckpointKind, CheckpointMeta, CHECKPOINT_VERSION};
use super::dataset::TrainingSet;
use super::log::{LossLog, LossRecord};
use super::optim::AdamW;
use super::{draw_indices, ensure_finite, sample_timesteps, streams};
use crate::config::RunConfig;
use crate::diffusion::{add_noise_batch, noise_mse, NoiseSchedule};
use crate::error::{invalid, Result};
use crate::models::{Denoiser, LatentScaling, TagSet, TagVocab};
use crate::rng::{derive_seed, normal_tensor, rng};

pub struct Stage1Trainer {
    cfg: RunConfig,
    schedule: NoiseSchedule,
    denoiser: Denoiser,
    opt: AdamW,
    rng: ChaCha8Rng,
    iteration: u64,
    log: LossLog,
}

pub const DENOISER_GROUP: &str = "denoiser";

/// A freshly initialized denoiser for `cfg`.
pub fn init_denoiser(cfg: &RunConfig) -> Result<Denoiser> {
    Denoiser::new(cfg.model.clone(), TagVocab::default(), derive_seed(cfg.seed, streams::DENOISER), DType::F32)
}

impl Stage1Trainer {
    pub fn new(cfg: RunConfig, denoiser: Denoiser) -> Result<Self> {
        cfg.validate()?;
        if denoiser.is_frozen() {
            return Err(invalid("stage 1 needs a trainable denoiser"));
        }
        let schedule = cfg.schedule.build()?;
        let opt = AdamW::new(denoiser.params().vars(), cfg.stage1.optimizer())?;
        let rng = rng(derive_seed(cfg.seed, streams::STAGE1));
        Ok(Self { cfg, schedule, denoiser, opt, rng, iteration: 0, log: LossLog::default() })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CheckpointKind::Stage1)?;
        let store = ck.store(DENOISER_GROUP)?;
        let denoiser = Denoiser::from_store(ck.meta.model.clone(), ck.meta.vocab.clone(), store, false)?;
        let mut t = Self::new(ck.meta.config.clone(), denoiser)?;
        ck.restore_optimizer(DENOISER_GROUP, &mut t.opt)?;
        t.rng = ck.meta.rng.clone();
        t.iteration = ck.meta.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointMeta {
            version: CHECKPOINT_VERSION,
            kind: CheckpointKind::Stage1,
            iteration: self.iteration,
            config: self.cfg.clone(),
            rng: self.rng.clone(),
            model: self.denoiser.config().clone(),
            vocab: self.denoiser.vocab().clone(),
            scaling: LatentScaling::default(),
            optimizer_steps: BTreeMap::new(),
        });
        ck.insert_store(DENOISER_GROUP, self.denoiser.params());
        ck.insert_optimizer(DENOISER_GROUP, &self.opt);
        ck
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn log(&self) -> &LossLog {
        &self.log
    }

    pub fn take_log(&mut self) -> LossLog {
        std::mem::take(&mut self.log)
    }

    pub fn into_parts(self) -> (Denoiser, LossLog) {
        (self.denoiser, self.log)
    }

    pub fn step(&mut self, data: &TrainingSet) -> Result<&LossRecord> {
        if data.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let b = self.cfg.stage1.batch_size;
        let idx = draw_indices(&mut self.rng, data.len(), b);
        let ts = sample_timesteps(&mut self.rng, self.schedule.len(), b);
        let drop = self.cfg.stage1.tag_dropout;
        let mut batch = data.batch(&idx)?;
        for tags in &mut batch.tags {
            if drop > 0.0 && self.rng.random_bool(drop) {
                *tags = TagSet::null();
            }
        }
        let eps = normal_tensor(&mut self.rng, batch.z0.dims(), batch.z0.dtype())?;
        let z_t = add_noise_batch(&batch.z0, &eps, &ts, &self.schedule)?;
        let eps_hat = self.denoiser.forward(&z_t, &ts, &batch.tags, None)?;
        let loss = noise_mse(&eps, &eps_hat)?;
        let noise = scalar(&loss)?;
        self.iteration += 1;
        ensure_finite(self.iteration, &[("noise", noise)], &ts)?;
        self.opt.backward_step(&loss)?;
        self.log.push(LossRecord { iter: self.iteration, timesteps: ts, noise, facial: 0.0, weight: 0.0, disc: 0.0 });
        Ok(self.log.records().last().unwrap())
    }

    /// Runs until `cfg.stage1.max_iters`, calling `on_checkpoint` every
    /// `checkpoint_every` iterations.
    pub fn run(&mut self, data: &TrainingSet, mut on_checkpoint: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        let every = self.cfg.stage1.checkpoint_every;
        while self.iteration < self.cfg.stage1.max_iters {
            self.step(data)?;
            if every > 0 && self.iteration % every == 0 {
                on_checkpoint(self)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Trains `denoiser` for `cfg.stage1.max_iters` iterations.
pub fn train_stage1(denoiser: Denoiser, data: &TrainingSet, cfg: &RunConfig) -> Result<(Denoiser, LossLog)> {
    let mut t = Stage1Trainer::new(cfg.clone(), denoiser)?;
    t.run(data, |_| Ok(()))?;
    Ok(t.into_parts())
}
