//! The data and training workflow as plain functions over in-memory values.
//! The command-line tool is a thin file-system layer over these.

use std::collections::BTreeMap;

use candle_core::DType;

use crate::config::RunConfig;
use crate::data::{
    align, annotate, curate, degrade, gen_face, sample_degradation, CurationOutcome, DegradationParams, FaceRecord,
    PairRecord,
};
use crate::error::Result;
use crate::eval::{config_hash, evaluate, FeatureExtractor, MetricReport, Restorer};
use crate::image::Image;
use crate::models::TagVocab;
use crate::rng::{derive_seed, rng};
use crate::train::{init_denoiser, streams, Checkpoint, Stage1Trainer, Stage2Trainer, TrainItem, TrainingSet};

/// A face record together with its pixels.
#[derive(Clone, Debug)]
pub struct FaceEntry {
    pub record: FaceRecord,
    pub image: Image,
}

#[derive(Clone, Debug)]
pub struct PairEntry {
    pub record: PairRecord,
    pub hq: Image,
    pub degraded: Image,
}

pub fn face_file_name(index: usize) -> String {
    format!("face_{index:05}.png")
}

/// Draws, aligns and annotates `cfg.data.num_faces` faces. The recorded
/// face-area fraction is measured in the generated frame, before alignment.
pub fn generate_faces(cfg: &RunConfig) -> Result<Vec<FaceEntry>> {
    let vocab = TagVocab::default();
    let base = derive_seed(cfg.seed, streams::DATA);
    let n = cfg.data.image_size;
    let template = cfg.data.template();
    (0..cfg.data.num_faces)
        .map(|i| {
            let face = gen_face(derive_seed(base, i as u64), n)?;
            let (image, landmarks) = if cfg.data.align {
                align(&face.image, &face.landmarks, &template)?
            } else {
                (face.image, face.landmarks)
            };
            let record = FaceRecord {
                image_path: face_file_name(i),
                image_size: [n, n],
                landmarks,
                face_area_fraction: face.params.face_area_fraction(),
                quality_score: face.quality_score,
                annotation: annotate(&face.params, &vocab)?,
                generator: Some(face.params),
            };
            Ok(FaceEntry { record, image })
        })
        .collect()
}

pub fn curate_faces(faces: Vec<FaceEntry>, cfg: &RunConfig) -> (Vec<FaceEntry>, CurationOutcome) {
    let outcome = curate(faces.iter().map(|f| f.record.clone()).collect(), &cfg.curation);
    let mut kept = Vec::with_capacity(outcome.kept.len());
    let mut it = faces.into_iter();
    for r in &outcome.kept {
        // `curate` preserves order, so kept records appear in sequence.
        for f in it.by_ref() {
            if &f.record == r {
                kept.push(f);
                break;
            }
        }
    }
    (kept, outcome)
}

/// Trailing `val_count` entries form the validation split.
pub fn split<T>(mut items: Vec<T>, val_count: usize) -> (Vec<T>, Vec<T>) {
    let k = items.len().saturating_sub(val_count);
    let val = items.split_off(k);
    (items, val)
}

/// Degradation parameters and noise seed for the face at `index`.
pub fn degradation_for(cfg: &RunConfig, index: u64) -> Result<(DegradationParams, u64)> {
    let seed = derive_seed(derive_seed(cfg.seed, streams::DEGRADE), index);
    let params = sample_degradation(&mut rng(seed), &cfg.degradation)?;
    Ok((params, seed))
}

pub fn degrade_faces(faces: &[FaceEntry], cfg: &RunConfig, lq_prefix: &str) -> Result<Vec<PairEntry>> {
    faces
        .iter()
        .map(|f| {
            let index = face_index(&f.record.image_path);
            let (params, seed) = degradation_for(cfg, index)?;
            let degraded = degrade(&f.image, &params, seed)?;
            let record = PairRecord {
                hq: f.record.clone(),
                degraded_path: format!("{lq_prefix}{}", file_name(&f.record.image_path)),
                degradation: params,
                degradation_seed: seed,
            };
            Ok(PairEntry { record, hq: f.image.clone(), degraded })
        })
        .collect()
}

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Stable per-face index used to key the degradation stream: the FNV-1a
/// hash of the file name, so it does not depend on list position.
fn face_index(path: &str) -> u64 {
    file_name(path).bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn face_training_set(faces: &[FaceEntry], cfg: &RunConfig) -> Result<TrainingSet> {
    let items = faces
        .iter()
        .map(|f| TrainItem {
            hq: f.image.clone(),
            landmarks: f.record.landmarks,
            tags: f.record.annotation.tag_set(),
            degraded: None,
        })
        .collect();
    TrainingSet::new(items, &cfg.facial_params().regions, DType::F32)
}

pub fn pair_training_set(pairs: &[PairEntry], cfg: &RunConfig) -> Result<TrainingSet> {
    let items = pairs
        .iter()
        .map(|p| TrainItem {
            hq: p.hq.clone(),
            landmarks: p.record.hq.landmarks,
            tags: p.record.hq.annotation.tag_set(),
            degraded: Some(p.degraded.clone()),
        })
        .collect();
    TrainingSet::new(items, &cfg.facial_params().regions, DType::F32)
}

/// Per-image restoration seeds.
pub fn restore_seed(cfg: &RunConfig, index: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, 8), index as u64)
}

pub struct ToyRun {
    pub stage1: Stage1Trainer,
    pub stage2: Stage2Trainer,
    pub val: Vec<PairEntry>,
    pub restored: Vec<Image>,
}

/// Curated, split and degraded toy data.
pub struct ToyData {
    pub train: Vec<FaceEntry>,
    pub train_pairs: Vec<PairEntry>,
    pub val: Vec<PairEntry>,
    pub rejected: usize,
}

pub fn toy_data(cfg: &RunConfig) -> Result<ToyData> {
    let faces = generate_faces(cfg)?;
    let (kept, outcome) = curate_faces(faces, cfg);
    let (train, val) = split(kept, cfg.data.val_count);
    let train_pairs = degrade_faces(&train, cfg, "lq/")?;
    let val = degrade_faces(&val, cfg, "lq/")?;
    Ok(ToyData { train, train_pairs, val, rejected: outcome.rejected.len() })
}

pub fn toy_stage1(cfg: &RunConfig, data: &ToyData, mut progress: impl FnMut(&str)) -> Result<Stage1Trainer> {
    let mut s1 = Stage1Trainer::new(cfg.clone(), init_denoiser(cfg)?)?;
    s1.run(&face_training_set(&data.train, cfg)?, |t| {
        progress(&format!("stage 1 iteration {}", t.iteration()));
        Ok(())
    })?;
    Ok(s1)
}

/// Stage 2 from a stage-1 checkpoint, then restoration of the validation split.
pub fn toy_stage2(
    cfg: &RunConfig,
    data: &ToyData,
    stage1: &Checkpoint,
    mut progress: impl FnMut(&str),
) -> Result<(Stage2Trainer, Vec<Image>)> {
    let mut s2 = Stage2Trainer::from_stage1(stage1, cfg.clone())?;
    s2.run(&pair_training_set(&data.train_pairs, cfg)?, |t| {
        progress(&format!("stage 2 iteration {}", t.iteration()));
        Ok(())
    })?;
    let restorer = Restorer::from_checkpoint(&s2.checkpoint())?.with_clip(cfg.sampling.clip);
    let restored = data
        .val
        .iter()
        .enumerate()
        .map(|(i, p)| restorer.restore(&p.degraded, cfg.sampling.num_steps, restore_seed(cfg, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((s2, restored))
}

/// Generation, curation, degradation, both training stages and validation
/// restoration, all in memory.
pub fn run_toy(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<ToyRun> {
    let data = toy_data(cfg)?;
    progress(&format!("curated {} faces, rejected {}", data.train.len() + data.val.len(), data.rejected));
    let s1 = toy_stage1(cfg, &data, &mut progress)?;
    let (s2, restored) = toy_stage2(cfg, &data, &s1.checkpoint(), &mut progress)?;
    Ok(ToyRun { stage1: s1, stage2: s2, val: data.val, restored })
}

/// The loss settings echoed into reports so ablation runs can be compared.
pub fn run_settings(cfg: &RunConfig) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("m".to_string(), cfg.loss.weight.m),
        ("s".to_string(), cfg.loss.weight.s),
        ("lambda_d".to_string(), cfg.loss.lambda_d),
        ("lambda_s".to_string(), cfg.loss.lambda_s),
    ])
}

/// Metric report of a toy run's restorations against the held-out references.
pub fn evaluate_toy(cfg: &RunConfig, run: &ToyRun) -> Result<MetricReport> {
    let names: Vec<String> = run.val.iter().map(|p| file_name(&p.record.hq.image_path).to_string()).collect();
    let gt: Vec<Image> = run.val.iter().map(|p| p.hq.clone()).collect();
    let fx = FeatureExtractor::new(cfg.eval.feature_dim, cfg.eval.feature_seed);
    let mut report = evaluate(&names, &run.restored, &gt, &fx, config_hash(cfg)?, cfg.seed)?;
    report.settings = run_settings(cfg);
    Ok(report)
}
