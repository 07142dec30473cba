//! Metrics, restoration and reporting.

pub mod fid;
pub mod metrics;
pub mod report;
pub mod restore;

pub use fid::{feature_fid, frechet_distance, FeatureExtractor};
pub use metrics::{mse, psnr, ssim, ssim_with, SsimParams};
pub use report::{config_hash, evaluate, ImageMetrics, MetricReport};
pub use restore::{restore, Restorer};
