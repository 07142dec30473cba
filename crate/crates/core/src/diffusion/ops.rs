use candle_core::Tensor;

use super::NoiseSchedule;
use crate::error::{invalid, Error, Result};

const MIN_ALPHA_PROD: f64 = 1e-12;

fn check_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(invalid(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// One coefficient per leading-axis entry, broadcastable against `like`.
fn per_sample(like: &Tensor, values: &[f64]) -> Result<Tensor> {
    let mut shape = vec![1usize; like.rank()];
    shape[0] = values.len();
    let t = Tensor::from_vec(values.to_vec(), shape, like.device())?;
    Ok(t.to_dtype(like.dtype())?)
}

fn noise_with_coeffs(z0: &Tensor, eps: &Tensor, alpha_prod: f64) -> Result<Tensor> {
    let a = alpha_prod.sqrt();
    let b = (1.0 - alpha_prod).sqrt();
    Ok((z0.affine(a, 0.0)? + eps.affine(b, 0.0)?)?)
}

fn z0_with_coeffs(z_t: &Tensor, eps_hat: &Tensor, alpha_prod: f64) -> Result<Tensor> {
    if alpha_prod < MIN_ALPHA_PROD {
        return Err(Error::NumericUnderflow(format!(
            "alpha_prod {alpha_prod:e} too small to invert"
        )));
    }
    let b = (1.0 - alpha_prod).sqrt();
    let inv_a = 1.0 / alpha_prod.sqrt();
    Ok((z_t - eps_hat.affine(b, 0.0)?)?.affine(inv_a, 0.0)?)
}

/// Closed-form forward process `sqrt(ab_t) z0 + sqrt(1 - ab_t) eps`.
pub fn add_noise(z0: &Tensor, eps: &Tensor, t: usize, s: &NoiseSchedule) -> Result<Tensor> {
    check_same_shape(z0, eps, "add_noise")?;
    noise_with_coeffs(z0, eps, s.alpha_prod(t)?)
}

/// [`add_noise`] with one timestep per entry of the leading (batch) axis.
pub fn add_noise_batch(z0: &Tensor, eps: &Tensor, ts: &[usize], s: &NoiseSchedule) -> Result<Tensor> {
    check_same_shape(z0, eps, "add_noise")?;
    check_batch(z0, ts)?;
    let a: Vec<f64> = ts.iter().map(|t| s.alpha_prod(*t).map(f64::sqrt)).collect::<Result<_>>()?;
    let b: Vec<f64> = ts.iter().map(|t| s.beta_prod(*t).map(f64::sqrt)).collect::<Result<_>>()?;
    Ok((z0.broadcast_mul(&per_sample(z0, &a)?)? + eps.broadcast_mul(&per_sample(z0, &b)?)?)?)
}

/// Clean-latent estimate `(z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)`.
pub fn predict_z0(z_t: &Tensor, eps_hat: &Tensor, t: usize, s: &NoiseSchedule) -> Result<Tensor> {
    check_same_shape(z_t, eps_hat, "predict_z0")?;
    z0_with_coeffs(z_t, eps_hat, s.alpha_prod(t)?)
}

/// [`predict_z0`] with one timestep per batch entry; differentiable in both inputs.
pub fn predict_z0_batch(z_t: &Tensor, eps_hat: &Tensor, ts: &[usize], s: &NoiseSchedule) -> Result<Tensor> {
    check_same_shape(z_t, eps_hat, "predict_z0")?;
    check_batch(z_t, ts)?;
    let mut b = Vec::with_capacity(ts.len());
    let mut inv_a = Vec::with_capacity(ts.len());
    for t in ts {
        let ap = s.alpha_prod(*t)?;
        if ap < MIN_ALPHA_PROD {
            return Err(Error::NumericUnderflow(format!(
                "alpha_prod {ap:e} at step {t} too small to invert"
            )));
        }
        b.push((1.0 - ap).sqrt());
        inv_a.push(1.0 / ap.sqrt());
    }
    let num = (z_t - eps_hat.broadcast_mul(&per_sample(z_t, &b)?)?)?;
    Ok(num.broadcast_mul(&per_sample(z_t, &inv_a)?)?)
}

fn check_batch(x: &Tensor, ts: &[usize]) -> Result<()> {
    if x.rank() == 0 || x.dim(0)? != ts.len() {
        return Err(invalid(format!(
            "batch of {} timesteps for tensor of shape {:?}",
            ts.len(),
            x.dims()
        )));
    }
    Ok(())
}

/// Mean squared error between added and predicted noise, as a scalar tensor.
pub fn noise_mse(eps: &Tensor, eps_hat: &Tensor) -> Result<Tensor> {
    check_same_shape(eps, eps_hat, "noise_mse")?;
    Ok((eps - eps_hat)?.sqr()?.mean_all()?)
}
