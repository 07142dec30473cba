//! Stage II: adapter training against a frozen denoiser with the total loss
//! and alternating discriminator updates.

use std::collections::BTreeMap;

use candle_core::DType;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, CheckpointKind, CheckpointMeta, CHECKPOINT_VERSION};
use super::dataset::TrainingSet;
use super::log::{LossLog, LossRecord};
use super::optim::AdamW;
use super::stage1::{scalar, DENOISER_GROUP};
use super::{abort_on_numeric, draw_indices, ensure_finite, sample_timesteps, streams};
use crate::config::RunConfig;
use crate::diffusion::{add_noise_batch, noise_mse, predict_z0_batch, NoiseSchedule};
use crate::error::{invalid, Result};
use crate::facial::{discriminator_step, facial_loss, time_weight, total_loss, FacialLossParams, RegionDiscriminators};
use crate::models::{init_adapter_from_denoiser, ControlAdapter, Denoiser, TagSet};
use crate::rng::{derive_seed, normal_tensor, rng};

pub const ADAPTER_GROUP: &str = "adapter";
pub const DISC_GROUP: &str = "disc";

pub struct Stage2Trainer {
    cfg: RunConfig,
    facial: FacialLossParams,
    schedule: NoiseSchedule,
    denoiser: Denoiser,
    adapter: ControlAdapter,
    disc: RegionDiscriminators,
    adapter_opt: AdamW,
    disc_opt: AdamW,
    rng: ChaCha8Rng,
    iteration: u64,
    log: LossLog,
}

/// Freezes the stage-1 denoiser in `ck` and derives a fresh adapter and
/// discriminators from it.
pub fn init_from_stage1(ck: &Checkpoint, cfg: &RunConfig) -> Result<(Denoiser, ControlAdapter, RegionDiscriminators)> {
    ck.expect_kind(CheckpointKind::Stage1)?;
    let denoiser = Denoiser::from_store(ck.meta.model.clone(), ck.meta.vocab.clone(), ck.store(DENOISER_GROUP)?, true)?;
    let adapter = init_adapter_from_denoiser(&denoiser, derive_seed(cfg.seed, streams::ADAPTER))?;
    let disc = RegionDiscriminators::new(denoiser.config().latent_channels, derive_seed(cfg.seed, streams::DISC), DType::F32)?;
    Ok((denoiser, adapter, disc))
}

impl Stage2Trainer {
    pub fn new(cfg: RunConfig, denoiser: Denoiser, adapter: ControlAdapter, disc: RegionDiscriminators) -> Result<Self> {
        cfg.validate()?;
        if !denoiser.is_frozen() {
            return Err(invalid("stage 2 refuses to start: the denoiser is not frozen"));
        }
        if adapter.config() != denoiser.config() {
            return Err(invalid("adapter and denoiser configurations differ"));
        }
        let facial = cfg.facial_params();
        let schedule = cfg.schedule.build()?;
        let adapter_opt = AdamW::new(adapter.params().vars(), cfg.stage2.optimizer())?;
        let disc_opt = AdamW::new(disc.params().vars(), cfg.stage2.disc_optimizer())?;
        for (_, v) in denoiser.params().iter() {
            if adapter_opt.holds(v.as_tensor()) || disc_opt.holds(v.as_tensor()) {
                return Err(invalid("an optimizer holds a frozen denoiser parameter"));
            }
        }
        let rng = rng(derive_seed(cfg.seed, streams::STAGE2));
        Ok(Self {
            cfg,
            facial,
            schedule,
            denoiser,
            adapter,
            disc,
            adapter_opt,
            disc_opt,
            rng,
            iteration: 0,
            log: LossLog::default(),
        })
    }

    pub fn from_stage1(ck: &Checkpoint, cfg: RunConfig) -> Result<Self> {
        let (d, a, disc) = init_from_stage1(ck, &cfg)?;
        Self::new(cfg, d, a, disc)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CheckpointKind::Stage2)?;
        let m = &ck.meta;
        let denoiser = Denoiser::from_store(m.model.clone(), m.vocab.clone(), ck.store(DENOISER_GROUP)?, true)?;
        let adapter = ControlAdapter::from_store(m.model.clone(), m.vocab.len(), m.scaling, ck.store(ADAPTER_GROUP)?)?;
        let disc = RegionDiscriminators::from_store(m.model.latent_channels, ck.store(DISC_GROUP)?)?;
        let mut t = Self::new(m.config.clone(), denoiser, adapter, disc)?;
        ck.restore_optimizer(ADAPTER_GROUP, &mut t.adapter_opt)?;
        ck.restore_optimizer(DISC_GROUP, &mut t.disc_opt)?;
        t.rng = m.rng.clone();
        t.iteration = m.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointMeta {
            version: CHECKPOINT_VERSION,
            kind: CheckpointKind::Stage2,
            iteration: self.iteration,
            config: self.cfg.clone(),
            rng: self.rng.clone(),
            model: self.denoiser.config().clone(),
            vocab: self.denoiser.vocab().clone(),
            scaling: self.adapter.scaling(),
            optimizer_steps: BTreeMap::new(),
        });
        ck.insert_store(DENOISER_GROUP, self.denoiser.params());
        ck.insert_store(ADAPTER_GROUP, self.adapter.params());
        ck.insert_store(DISC_GROUP, self.disc.params());
        ck.insert_optimizer(ADAPTER_GROUP, &self.adapter_opt);
        ck.insert_optimizer(DISC_GROUP, &self.disc_opt);
        ck
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn adapter(&self) -> &ControlAdapter {
        &self.adapter
    }

    pub fn discriminators(&self) -> &RegionDiscriminators {
        &self.disc
    }

    pub fn log(&self) -> &LossLog {
        &self.log
    }

    pub fn take_log(&mut self) -> LossLog {
        std::mem::take(&mut self.log)
    }

    pub fn step(&mut self, data: &TrainingSet) -> Result<&LossRecord> {
        if data.is_empty() || !data.is_paired() {
            return Err(invalid("stage 2 needs a non-empty paired training set"));
        }
        let b = self.cfg.stage2.batch_size;
        let idx = draw_indices(&mut self.rng, data.len(), b);
        let ts = sample_timesteps(&mut self.rng, self.schedule.len(), b);
        let batch = data.batch(&idx)?;
        let degraded = batch.degraded.as_ref().expect("paired");
        let eps = normal_tensor(&mut self.rng, batch.z0.dims(), batch.z0.dtype())?;
        let z_t = add_noise_batch(&batch.z0, &eps, &ts, &self.schedule)?;
        let ctrl = self.adapter.control_features(degraded, &z_t, &ts)?;
        let eps_hat = self.denoiser.forward(&z_t, &ts, &[TagSet::null()], Some(&ctrl))?;
        let z0_pred = predict_z0_batch(&z_t, &eps_hat, &ts, &self.schedule)?;
        let t_norms: Vec<f64> = ts.iter().map(|&t| self.schedule.normalized_time(t)).collect();
        let weights = t_norms.iter().map(|&t| time_weight(t, &self.facial.weight)).collect::<Result<Vec<_>>>()?;
        let weight = weights.iter().sum::<f64>() / b as f64;
        self.iteration += 1;

        let disc = if self.facial.is_disabled() {
            0.0
        } else {
            discriminator_step(&self.disc, &mut self.disc_opt, &batch.z0, &z0_pred, &batch.boxes)
                .map_err(|e| abort_on_numeric(self.iteration, e))?
        };
        let noise_t = noise_mse(&eps, &eps_hat)?;
        let facial_t = facial_loss(&z0_pred, &batch.z0, &batch.boxes, &t_norms, &self.disc, &self.facial)
            .map_err(|e| abort_on_numeric(self.iteration, e))?;
        let (noise, facial) = (scalar(&noise_t)?, scalar(&facial_t)?);
        ensure_finite(self.iteration, &[("noise", noise), ("facial", facial), ("disc", disc)], &ts)?;
        self.adapter_opt.backward_step(&total_loss(&noise_t, &facial_t)?)?;
        self.log.push(LossRecord { iter: self.iteration, timesteps: ts, noise, facial, weight, disc });
        Ok(self.log.records().last().unwrap())
    }

    pub fn run(&mut self, data: &TrainingSet, mut on_checkpoint: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        let every = self.cfg.stage2.checkpoint_every;
        while self.iteration < self.cfg.stage2.max_iters {
            self.step(data)?;
            if every > 0 && self.iteration % every == 0 {
                on_checkpoint(self)?;
            }
        }
        Ok(())
    }

    pub fn into_parts(self) -> (ControlAdapter, RegionDiscriminators, LossLog) {
        (self.adapter, self.disc, self.log)
    }
}

/// Trains the adapter and discriminators for `cfg.stage2.max_iters` iterations.
pub fn train_stage2(
    frozen: Denoiser,
    adapter: ControlAdapter,
    disc: RegionDiscriminators,
    data: &TrainingSet,
    cfg: &RunConfig,
) -> Result<(ControlAdapter, RegionDiscriminators, LossLog)> {
    let mut t = Stage2Trainer::new(cfg.clone(), frozen, adapter, disc)?;
    t.run(data, |_| Ok(()))?;
    Ok(t.into_parts())
}
