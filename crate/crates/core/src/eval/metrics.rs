//! Full-reference image metrics on `[0, 1]` data.

use crate::error::{invalid, Result};
use crate::image::Image;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(invalid(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.as_slice().len() as f64;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / n)
}

/// `10 log10(1 / MSE)` with a peak value of 1. Identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    /// Odd window side.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range: 1.0 }
    }
}

/// Normalized separable Gaussian taps.
pub fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..window).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all fully contained windows of the Rec.601 luma.
pub fn ssim_with(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    check_shapes(a, b)?;
    if p.window == 0 || p.window % 2 == 0 || !(p.sigma > 0.0) {
        return Err(invalid("SSIM window must be odd and sigma positive"));
    }
    let (w, h) = (a.width(), a.height());
    if w < p.window || h < p.window {
        return Err(invalid(format!("{w}x{h} image is smaller than the {0}x{0} SSIM window", p.window)));
    }
    let (x, y) = (a.luminance(), b.luminance());
    let g = gaussian_taps(p.window, p.sigma);
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let (ow, oh) = (w - p.window + 1, h - p.window + 1);
    let mut total = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (j, gj) in g.iter().enumerate() {
                for (i, gi) in g.iter().enumerate() {
                    let k = (oy + j) * w + ox + i;
                    let wt = gi * gj;
                    mx += wt * x[k];
                    my += wt * y[k];
                    sxx += wt * x[k] * x[k];
                    syy += wt * y[k] * y[k];
                    sxy += wt * x[k] * y[k];
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (ow * oh) as f64)
}

/// SSIM with an 11x11 Gaussian window, sigma 1.5.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}
