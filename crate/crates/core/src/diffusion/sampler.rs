use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{predict_z0, NoiseSchedule};
use crate::error::{invalid, Result};

/// Anything that maps a noisy latent at step `t` to a noise estimate of the same shape.
pub trait NoisePredictor {
    fn predict_noise(&self, z_t: &Tensor, t: usize) -> Result<Tensor>;
}

impl<F> NoisePredictor for F
where
    F: Fn(&Tensor, usize) -> Result<Tensor>,
{
    fn predict_noise(&self, z_t: &Tensor, t: usize) -> Result<Tensor> {
        self(z_t, t)
    }
}

/// Uniformly strided steps, descending, starting at `T - 1`.
pub fn ddim_timesteps(schedule_len: usize, num_steps: usize) -> Result<Vec<usize>> {
    if num_steps == 0 || num_steps > schedule_len {
        return Err(invalid(format!(
            "num_steps must lie in [1, {schedule_len}], got {num_steps}"
        )));
    }
    let stride = schedule_len / num_steps;
    Ok((0..num_steps).map(|i| schedule_len - 1 - i * stride).collect())
}

/// Deterministic (eta = 0) DDIM sampling from a seeded Gaussian latent.
///
/// The last update moves to the clean endpoint (`alpha_prod = 1`), so the
/// result is the final clean-latent estimate.
pub fn sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    shape: &[usize],
    num_steps: usize,
    seed: u64,
    device: &Device,
    dtype: DType,
) -> Result<Tensor> {
    sample_clipped(predictor, schedule, shape, num_steps, seed, device, dtype, None)
}

/// [`sample`] with each clean-latent estimate clamped to `[-c, c]`; the
/// noise estimate is then re-derived from the clamped latent.
#[allow(clippy::too_many_arguments)]
pub fn sample_clipped<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    shape: &[usize],
    num_steps: usize,
    seed: u64,
    device: &Device,
    dtype: DType,
    clip: Option<f64>,
) -> Result<Tensor> {
    if let Some(c) = clip {
        if !(c > 0.0) {
            return Err(invalid(format!("clip bound must be positive, got {c}")));
        }
    }
    let steps = ddim_timesteps(schedule.len(), num_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let init: Vec<f32> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut z = Tensor::from_vec(init, shape, device)?.to_dtype(dtype)?;
    for (i, &t) in steps.iter().enumerate() {
        let mut eps = predictor.predict_noise(&z, t)?;
        let mut z0 = predict_z0(&z, &eps, t, schedule)?;
        if let Some(c) = clip {
            z0 = z0.clamp(-c, c)?;
            let a = schedule.alpha_prod(t)?;
            eps = (&z - z0.affine(a.sqrt(), 0.0)?)?.affine(1.0 / (1.0 - a).sqrt(), 0.0)?;
        }
        let prev = match steps.get(i + 1) {
            Some(&tp) => schedule.alpha_prod(tp)?,
            None => 1.0,
        };
        z = (z0.affine(prev.sqrt(), 0.0)? + eps.affine((1.0 - prev).sqrt(), 0.0)?)?;
    }
    Ok(z)
}
