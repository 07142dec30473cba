//! Time-aware latent facial feature loss: logit-normal time weighting,
//! landmark-to-latent regions, regional discriminators and Gram matching.

pub mod discriminator;
mod gram;
mod loss;
pub mod regions;
mod weight;

pub use discriminator::{bce_from_probs, discriminator_loss, RegionDiscriminator, RegionDiscriminators, RegionPatches};
pub use gram::gram;
pub use loss::{discriminator_step, facial_loss, total_loss, FacialLossParams};
pub use regions::{crop, crop_batch, crop_regions, landmarks_to_latent_boxes, LandmarkSet, LatentBox, Region, RegionBoxes, RegionSizes};
pub use weight::{logit, time_weight, LogitConvention, TimeWeightParams};
