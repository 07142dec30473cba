//! Synthetic degradation: blur, downscale, noise, JPEG, upscale.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::{self, FilterType};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image;

/// `jpeg_quality = None` means lossless (the JPEG stage is skipped).
/// `noise_sigma` is on the 0..255 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub blur_sigma: f64,
    pub downscale: f64,
    pub noise_sigma: f64,
    pub jpeg_quality: Option<u8>,
}

impl DegradationParams {
    pub fn identity() -> Self {
        Self { blur_sigma: 0.0, downscale: 1.0, noise_sigma: 0.0, jpeg_quality: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(invalid(format!("blur_sigma must be >= 0, got {}", self.blur_sigma)));
        }
        if !(self.downscale >= 1.0 && self.downscale.is_finite()) {
            return Err(invalid(format!("downscale must be >= 1, got {}", self.downscale)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let Some(q) = self.jpeg_quality {
            if !(1..=100).contains(&q) {
                return Err(invalid(format!("jpeg_quality must lie in 1..=100, got {q}")));
            }
        }
        Ok(())
    }
}

fn resize(img: &Image, w: usize, h: usize) -> Image {
    Image::from_rgb32f(&imageops::resize(&img.to_rgb32f(), w as u32, h as u32, FilterType::CatmullRom))
}

fn jpeg_round_trip(img: &Image, quality: u8) -> Result<Image> {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&img.to_rgb8())?;
    let decoded = image::load(Cursor::new(buf), image::ImageFormat::Jpeg)?.to_rgb8();
    Ok(Image::from_rgb8(&decoded))
}

/// Gaussian blur, bicubic downscale by `r`, additive Gaussian noise, JPEG
/// round trip, then bicubic upscale back to the input size. Stages whose
/// parameter is at its identity value are skipped, so identity parameters
/// return the input unchanged.
pub fn degrade(image: &Image, params: &DegradationParams, seed: u64) -> Result<Image> {
    params.validate()?;
    let mut rng = crate::rng::rng(seed);
    let (w, h) = (image.width(), image.height());
    let mut img = image.clone();
    if params.blur_sigma > 0.0 {
        img = Image::from_rgb32f(&imageops::blur(&img.to_rgb32f(), params.blur_sigma as f32));
    }
    if params.downscale > 1.0 {
        let sw = ((w as f64 / params.downscale).round() as usize).max(1);
        let sh = ((h as f64 / params.downscale).round() as usize).max(1);
        img = resize(&img, sw, sh);
    }
    if params.noise_sigma > 0.0 {
        let sigma = (params.noise_sigma / 255.0) as f32;
        for v in img.as_mut_slice() {
            let n: f32 = rng.sample(StandardNormal);
            *v = (*v + sigma * n).clamp(0.0, 1.0);
        }
    }
    if let Some(q) = params.jpeg_quality {
        img = jpeg_round_trip(&img.clamp01(), q)?;
    }
    if img.width() != w || img.height() != h {
        img = resize(&img, w, h);
    }
    if params == &DegradationParams::identity() {
        return Ok(img);
    }
    Ok(img.clamp01())
}

/// Closed intervals for each degradation parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationRanges {
    pub blur_sigma: [f64; 2],
    pub downscale: [f64; 2],
    pub noise_sigma: [f64; 2],
    pub jpeg_quality: [u8; 2],
    /// Skip the JPEG stage entirely.
    pub lossless: bool,
}

impl Default for DegradationRanges {
    fn default() -> Self {
        Self { blur_sigma: [0.2, 10.0], downscale: [1.0, 8.0], noise_sigma: [0.0, 20.0], jpeg_quality: [60, 100], lossless: false }
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2], name: &str) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("empty range for {name}: [{lo}, {hi}]")));
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..=hi) })
}

/// Independent uniform draws per field.
pub fn sample_degradation(rng: &mut ChaCha8Rng, ranges: &DegradationRanges) -> Result<DegradationParams> {
    let blur_sigma = draw(rng, ranges.blur_sigma, "blur_sigma")?;
    let downscale = draw(rng, ranges.downscale, "downscale")?;
    let noise_sigma = draw(rng, ranges.noise_sigma, "noise_sigma")?;
    let [qlo, qhi] = ranges.jpeg_quality;
    if qlo > qhi || qlo == 0 || qhi > 100 {
        return Err(invalid(format!("empty range for jpeg_quality: [{qlo}, {qhi}]")));
    }
    let q = rng.random_range(qlo..=qhi);
    let jpeg_quality = if ranges.lossless { None } else { Some(q) };
    let p = DegradationParams { blur_sigma, downscale, noise_sigma, jpeg_quality };
    p.validate()?;
    Ok(p)
}
