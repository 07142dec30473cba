//! In-memory training sets of encoded latents.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::data::manifest::{load_pair_images, load_record_image, read_jsonl, FaceRecord, PairRecord};
use crate::error::{invalid, Result};
use crate::facial::{landmarks_to_latent_boxes, LandmarkSet, RegionBoxes, RegionSizes};
use crate::image::Image;
use crate::models::{LatentCodec, LatentScaling, TagSet};

#[derive(Clone, Debug)]
pub struct TrainItem {
    pub hq: Image,
    pub landmarks: LandmarkSet,
    pub tags: TagSet,
    pub degraded: Option<Image>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// Model-space latent, `(C, h, w)`.
    pub latent: Tensor,
    pub tags: TagSet,
    pub boxes: RegionBoxes,
    /// Pixel tensor `(3, H, W)` in `[0, 1]`.
    pub degraded: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub z0: Tensor,
    pub tags: Vec<TagSet>,
    pub boxes: Vec<RegionBoxes>,
    pub degraded: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    samples: Vec<Sample>,
    image_size: [usize; 2],
}

impl TrainingSet {
    pub fn new(items: Vec<TrainItem>, sizes: &RegionSizes, dtype: DType) -> Result<Self> {
        let first = items.first().ok_or_else(|| invalid("training set is empty"))?;
        let image_size = [first.hq.width(), first.hq.height()];
        let codec = LatentCodec::default();
        let scaling = LatentScaling::default();
        let paired = first.degraded.is_some();
        let mut samples = Vec::with_capacity(items.len());
        for (i, it) in items.into_iter().enumerate() {
            if [it.hq.width(), it.hq.height()] != image_size {
                return Err(invalid(format!("item {i} is not {}x{}", image_size[0], image_size[1])));
            }
            if it.degraded.is_some() != paired {
                return Err(invalid("either every item or no item carries a degraded image"));
            }
            it.landmarks.validate(image_size[0], image_size[1])?;
            let latent = scaling.to_model(&codec.encode(&it.hq)?)?.to_dtype(dtype)?;
            let boxes = landmarks_to_latent_boxes(&it.landmarks, (image_size[1], image_size[0]), sizes)?;
            let degraded = match &it.degraded {
                Some(d) if !d.same_shape(&it.hq) => return Err(invalid(format!("item {i}: degraded size differs"))),
                Some(d) => Some(d.to_tensor(&Device::Cpu, dtype)?),
                None => None,
            };
            samples.push(Sample { latent, tags: it.tags, boxes, degraded });
        }
        Ok(Self { samples, image_size })
    }

    pub fn from_face_manifest(path: impl AsRef<Path>, sizes: &RegionSizes, dtype: DType) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<FaceRecord> = read_jsonl(path)?;
        let items = records
            .iter()
            .map(|r| {
                Ok(TrainItem {
                    hq: load_record_image(path, r)?,
                    landmarks: r.landmarks,
                    tags: r.annotation.tag_set(),
                    degraded: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(items, sizes, dtype)
    }

    pub fn from_pair_manifest(path: impl AsRef<Path>, sizes: &RegionSizes, dtype: DType) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<PairRecord> = read_jsonl(path)?;
        let items = records
            .iter()
            .map(|r| {
                let (hq, lq) = load_pair_images(path, r)?;
                Ok(TrainItem { hq, landmarks: r.hq.landmarks, tags: r.hq.annotation.tag_set(), degraded: Some(lq) })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(items, sizes, dtype)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_paired(&self) -> bool {
        self.samples[0].degraded.is_some()
    }

    pub fn image_size(&self) -> [usize; 2] {
        self.image_size
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        if idx.is_empty() {
            return Err(invalid("empty batch"));
        }
        let get = |i: usize| self.samples.get(i).ok_or_else(|| invalid(format!("index {i} out of range")));
        let picked = idx.iter().map(|&i| get(i)).collect::<Result<Vec<_>>>()?;
        let z0 = Tensor::stack(&picked.iter().map(|s| &s.latent).collect::<Vec<_>>(), 0)?;
        let degraded = if self.is_paired() {
            Some(Tensor::stack(&picked.iter().map(|s| s.degraded.as_ref().unwrap()).collect::<Vec<_>>(), 0)?)
        } else {
            None
        };
        Ok(Batch {
            z0,
            tags: picked.iter().map(|s| s.tags.clone()).collect(),
            boxes: picked.iter().map(|s| s.boxes).collect(),
            degraded,
        })
    }
}
