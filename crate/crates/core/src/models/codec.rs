//! Lossless pixel/latent codec: an 8x space-to-depth rearrangement.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image;

pub const SPATIAL_FACTOR: usize = 8;
pub const LATENT_CHANNELS: usize = 3 * SPATIAL_FACTOR * SPATIAL_FACTOR;

/// Latent channel `c * 64 + dy * 8 + dx` at `(y, x)` holds pixel channel `c`
/// at `(8y + dy, 8x + dx)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentCodec {
    pub spatial_factor: usize,
    pub channel_factor: usize,
}

impl Default for LatentCodec {
    fn default() -> Self {
        Self { spatial_factor: SPATIAL_FACTOR, channel_factor: LATENT_CHANNELS }
    }
}

impl LatentCodec {
    /// `(3, H, W)` image to `(192, H/8, W/8)` latent.
    pub fn encode(&self, image: &Image) -> Result<Tensor> {
        let t = image.to_tensor(&Device::Cpu, DType::F32)?.unsqueeze(0)?;
        Ok(self.encode_tensor(&t)?.squeeze(0)?)
    }

    pub fn decode(&self, latent: &Tensor) -> Result<Image> {
        let t = match latent.rank() {
            3 => latent.unsqueeze(0)?,
            4 if latent.dim(0)? == 1 => latent.clone(),
            _ => return Err(invalid(format!("cannot decode latent of shape {:?}", latent.dims()))),
        };
        Image::from_tensor(&self.decode_tensor(&t)?.squeeze(0)?)
    }

    /// Batched `(B, 3, H, W)` to `(B, 192, H/8, W/8)`.
    pub fn encode_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let f = self.spatial_factor;
        let (b, c, h, w) = x.dims4()?;
        if c != 3 {
            return Err(invalid(format!("expected RGB input, got {c} channels")));
        }
        if h % f != 0 || w % f != 0 {
            return Err(invalid(format!("image {w}x{h} not divisible by {f}")));
        }
        let (lh, lw) = (h / f, w / f);
        Ok(x
            .reshape(vec![b, c, lh, f, lw, f])?
            .permute(vec![0, 1, 3, 5, 2, 4])?
            .reshape((b, c * f * f, lh, lw))?)
    }

    pub fn decode_tensor(&self, z: &Tensor) -> Result<Tensor> {
        let f = self.spatial_factor;
        let (b, c, lh, lw) = z.dims4()?;
        if c != self.channel_factor {
            return Err(invalid(format!("expected {} latent channels, got {c}", self.channel_factor)));
        }
        Ok(z
            .reshape(vec![b, 3, f, f, lh, lw])?
            .permute(vec![0, 1, 4, 2, 5, 3])?
            .reshape((b, 3, lh * f, lw * f))?)
    }
}

/// Affine map between codec latents (`[0, 1]` pixel statistics) and the
/// zero-centred space the diffusion model operates in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentScaling {
    pub shift: f64,
    pub scale: f64,
}

impl Default for LatentScaling {
    fn default() -> Self {
        Self { shift: 0.5, scale: 2.0 }
    }
}

impl LatentScaling {
    pub fn to_model(&self, z: &Tensor) -> Result<Tensor> {
        Ok(z.affine(self.scale, -self.shift * self.scale)?)
    }

    pub fn from_model(&self, z: &Tensor) -> Result<Tensor> {
        Ok(z.affine(1.0 / self.scale, self.shift)?)
    }
}
