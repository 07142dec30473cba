//! JSON-lines dataset manifests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::facial::LandmarkSet;
use crate::image::Image;

use super::annotate::AnnotationRecord;
use super::degrade::DegradationParams;
use super::face::FaceParams;

/// `image_path` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub image_path: String,
    pub image_size: [usize; 2],
    pub landmarks: LandmarkSet,
    pub face_area_fraction: f64,
    pub quality_score: f64,
    pub annotation: AnnotationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<FaceParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    #[serde(flatten)]
    pub hq: FaceRecord,
    pub degraded_path: String,
    pub degradation: DegradationParams,
    pub degradation_seed: u64,
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(rel)
}

pub fn load_record_image(manifest: &Path, rec: &FaceRecord) -> Result<Image> {
    let img = Image::load_png(resolve(manifest, &rec.image_path))?;
    if [img.width(), img.height()] != rec.image_size {
        return Err(invalid(format!(
            "{} is {}x{}, manifest says {:?}",
            rec.image_path,
            img.width(),
            img.height(),
            rec.image_size
        )));
    }
    Ok(img)
}

pub fn load_pair_images(manifest: &Path, rec: &PairRecord) -> Result<(Image, Image)> {
    let hq = load_record_image(manifest, &rec.hq)?;
    let lq = Image::load_png(resolve(manifest, &rec.degraded_path))?;
    if !lq.same_shape(&hq) {
        return Err(invalid(format!("{} does not match its HQ image size", rec.degraded_path)));
    }
    Ok((hq, lq))
}
