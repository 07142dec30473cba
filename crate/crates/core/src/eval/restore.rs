//! End-to-end restoration with a trained adapter.

use candle_core::{Device, Tensor};

use crate::diffusion::{sample_clipped, NoiseSchedule};
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::models::{ControlAdapter, Denoiser, LatentCodec, LatentScaling, TagSet, LATENT_CHANNELS};
use crate::train::checkpoint::{Checkpoint, CheckpointKind};
use crate::train::stage1::DENOISER_GROUP;
use crate::train::stage2::ADAPTER_GROUP;

pub struct Restorer {
    denoiser: Denoiser,
    adapter: ControlAdapter,
    schedule: NoiseSchedule,
    codec: LatentCodec,
    scaling: LatentScaling,
    clip: Option<f64>,
}

impl Restorer {
    pub fn new(denoiser: Denoiser, adapter: ControlAdapter, schedule: NoiseSchedule, clip: Option<f64>) -> Result<Self> {
        if adapter.config() != denoiser.config() {
            return Err(invalid("adapter and denoiser configurations differ"));
        }
        if denoiser.config().latent_channels != LATENT_CHANNELS {
            return Err(Error::Checkpoint(format!(
                "model expects {} latent channels, the codec produces {LATENT_CHANNELS}",
                denoiser.config().latent_channels
            )));
        }
        let scaling = adapter.scaling();
        Ok(Self { denoiser: denoiser.freeze()?, adapter, schedule, codec: LatentCodec::default(), scaling, clip })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CheckpointKind::Stage2)?;
        let m = &ck.meta;
        let denoiser = Denoiser::from_store(m.model.clone(), m.vocab.clone(), ck.store(DENOISER_GROUP)?, true)?;
        let adapter = ControlAdapter::from_store(m.model.clone(), m.vocab.len(), m.scaling, ck.store(ADAPTER_GROUP)?)?;
        Self::new(denoiser, adapter, m.config.schedule.build()?, m.config.sampling.clip)
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip = clip;
        self
    }

    /// Samples a clean image conditioned on `degraded` with null tags.
    pub fn restore(&self, degraded: &Image, num_steps: usize, seed: u64) -> Result<Image> {
        let f = self.codec.spatial_factor;
        let (w, h) = (degraded.width(), degraded.height());
        if w % f != 0 || h % f != 0 {
            return Err(invalid(format!("image sides must be divisible by {f}, got {w}x{h}")));
        }
        let dtype = self.denoiser.dtype();
        let cond = degraded.to_tensor(&Device::Cpu, dtype)?.unsqueeze(0)?;
        let null = [TagSet::null()];
        let predictor = |z: &Tensor, t: usize| -> Result<Tensor> {
            let ctrl = self.adapter.control_features(&cond, z, &[t])?;
            self.denoiser.forward(z, &[t], &null, Some(&ctrl))
        };
        let shape = [1, LATENT_CHANNELS, h / f, w / f];
        let z = sample_clipped(&predictor, &self.schedule, &shape, num_steps, seed, &Device::Cpu, dtype, self.clip)?;
        let z = self.scaling.from_model(&z.squeeze(0)?)?;
        Ok(self.codec.decode(&z)?.clamp01())
    }
}

/// Restores one image from a stage-2 checkpoint.
pub fn restore(degraded: &Image, ck: &Checkpoint, num_steps: usize, seed: u64) -> Result<Image> {
    Restorer::from_checkpoint(ck)?.restore(degraded, num_steps, seed)
}
