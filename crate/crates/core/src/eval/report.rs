//! Metric reports as JSON and CSV.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::fid::{feature_fid, FeatureExtractor};
use super::metrics::{psnr, ssim};
use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::image::Image;

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
mod lenient_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&format_f64(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => parse_f64(&s).ok_or_else(|| serde::de::Error::custom(format!("bad number {s:?}"))),
        }
    }
}

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image: String,
    #[serde(with = "lenient_f64")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
    #[serde(with = "lenient_f64")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Absent when a corpus is too small for the feature dimension.
    pub fid: Option<f64>,
    pub config_hash: String,
    pub seed: u64,
    /// Run settings echoed for side-by-side comparison.
    #[serde(default)]
    pub settings: BTreeMap<String, f64>,
}

/// Hex SHA-256 of the canonical TOML form of `cfg`.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(cfg.to_toml()?.as_bytes())))
}

/// Per-pair PSNR and SSIM plus corpus FID of `restored` against `gt`.
pub fn evaluate(
    names: &[String],
    restored: &[Image],
    gt: &[Image],
    fx: &FeatureExtractor,
    config_hash: String,
    seed: u64,
) -> Result<MetricReport> {
    if restored.len() != gt.len() || names.len() != gt.len() || gt.is_empty() {
        return Err(invalid("evaluation needs equally many named restored and reference images"));
    }
    let images = names
        .iter()
        .zip(restored.iter().zip(gt))
        .map(|(n, (r, g))| Ok(ImageMetrics { image: n.clone(), psnr: psnr(r, g)?, ssim: ssim(r, g)? }))
        .collect::<Result<Vec<_>>>()?;
    let n = images.len() as f64;
    let fid = if gt.len() > fx.dim() { Some(feature_fid(restored, gt, fx)?) } else { None };
    Ok(MetricReport {
        mean_psnr: images.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: images.iter().map(|m| m.ssim).sum::<f64>() / n,
        images,
        fid,
        config_hash,
        seed,
        settings: BTreeMap::new(),
    })
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-image rows followed by a `mean` row carrying the FID.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image", "psnr", "ssim", "fid"])?;
        for m in &self.images {
            w.write_record([m.image.clone(), format_f64(m.psnr), format_f64(m.ssim), String::new()])?;
        }
        w.write_record([
            "mean".to_string(),
            format_f64(self.mean_psnr),
            format_f64(self.mean_ssim),
            self.fid.map(format_f64).unwrap_or_default(),
        ])?;
        String::from_utf8(w.into_inner().map_err(|e| invalid(e.to_string()))?).map_err(|e| invalid(e.to_string()))
    }

    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        Ok(())
    }
}
