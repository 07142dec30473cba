//! Blind face restoration with a frozen diffusion prior, a trainable control
//! adapter and a time-aware facial feature loss over eye and mouth regions.
//!
//! Everything runs at desk scale on the CPU: an invertible space-to-depth
//! codec stands in for a learned autoencoder, and a procedural face generator
//! supplies images with exact landmarks.

pub mod cli;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod facial;
pub mod image;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use image::Image;
