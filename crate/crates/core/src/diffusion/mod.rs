//! Noise schedules, the closed-form forward process, clean-latent estimation,
//! the noise-prediction objective and a deterministic sampler.

mod ops;
mod sampler;
mod schedule;

pub use ops::{add_noise, add_noise_batch, noise_mse, predict_z0, predict_z0_batch};
pub use sampler::{ddim_timesteps, sample, sample_clipped, NoisePredictor};
pub use schedule::{NoiseSchedule, ScheduleKind};
