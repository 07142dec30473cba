//! Latent codec, the UNet denoiser and its control adapter.

pub mod adapter;
pub mod codec;
pub mod nn;
pub mod tags;
pub mod unet;

pub use adapter::{init_adapter_from_denoiser, ControlAdapter, ControlFeatures};
pub use codec::{LatentCodec, LatentScaling, LATENT_CHANNELS, SPATIAL_FACTOR};
pub use nn::ParamStore;
pub use tags::{TagSet, TagVocab};
pub use unet::{Denoiser, UNetConfig};
