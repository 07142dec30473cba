//! Floating-point RGB images in `[0, 1]` and lossless PNG I/O.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::{ImageBuffer, Rgb, Rgb32FImage, RgbImage};

use crate::error::{invalid, Result};

/// Interleaved RGB image, row-major, `f32` samples nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(invalid(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Rec. 601 luma, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    /// Channel-first `(3, H, W)` tensor.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let (w, h) = (self.width, self.height);
        let mut planar = vec![0f32; w * h * 3];
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planar[c * w * h + i] = p[c];
            }
        }
        Ok(Tensor::from_vec(planar, (3, h, w), device)?.to_dtype(dtype)?)
    }

    /// Inverse of [`Image::to_tensor`]; accepts `(3, H, W)` or `(1, 3, H, W)`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = if t.rank() == 4 { t.squeeze(0)? } else { t.clone() };
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(invalid(format!("expected 3 channels, got {c}")));
        }
        let planar: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
        let mut data = vec![0f32; w * h * 3];
        for i in 0..w * h {
            for ch in 0..3 {
                data[i * 3 + ch] = planar[ch * w * h + i];
            }
        }
        Image::new(w, h, data)
    }

    pub fn to_rgb32f(&self) -> Rgb32FImage {
        ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb32f(img: &Rgb32FImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().clone(),
        }
    }

    /// Quantizes to 8 bits with round-to-nearest after clamping to `[0, 1]`.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self.data.iter().map(|v| quantize(*v)).collect();
        ImageBuffer::<Rgb<u8>, _>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|v| *v as f32 / 255.0).collect(),
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

#[inline]
pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Stacks images of equal size into a `(B, 3, H, W)` batch.
pub fn stack_images(images: &[&Image], device: &Device, dtype: DType) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| invalid("empty image batch"))?;
    let mut ts = Vec::with_capacity(images.len());
    for img in images {
        if !img.same_shape(first) {
            return Err(invalid("images in a batch must share dimensions"));
        }
        ts.push(img.to_tensor(device, dtype)?);
    }
    Ok(Tensor::stack(&ts, 0)?)
}
