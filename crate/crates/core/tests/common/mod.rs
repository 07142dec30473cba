#![allow(dead_code)]

use std::path::Path;

use authface::config::RunConfig;
use authface::models::UNetConfig;
use authface::pipeline::{curate_faces, degrade_faces, face_training_set, generate_faces, pair_training_set, split, PairEntry};
use authface::train::TrainingSet;

/// A configuration small enough for many end-to-end runs in a test.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.data.num_faces = 20;
    cfg.data.val_count = 4;
    cfg.schedule.steps = 100;
    cfg.model = UNetConfig { base_channels: 8, channel_mult: vec![1, 2], time_embed_dim: 16, norm_groups: 4, ..UNetConfig::default() };
    cfg.stage1.max_iters = 4;
    cfg.stage1.checkpoint_every = 2;
    cfg.stage1.batch_size = 2;
    cfg.stage2.max_iters = 4;
    cfg.stage2.checkpoint_every = 2;
    cfg.stage2.batch_size = 2;
    cfg.sampling.num_steps = 4;
    cfg.eval.feature_dim = 4;
    cfg
}

pub fn write_config(cfg: &RunConfig, path: &Path) {
    std::fs::write(path, cfg.to_toml().unwrap()).unwrap();
}

/// `(stage-1 faces, stage-2 pairs, validation pairs)` built in memory.
pub fn toy_sets(cfg: &RunConfig) -> (TrainingSet, TrainingSet, Vec<PairEntry>) {
    let (kept, _) = curate_faces(generate_faces(cfg).unwrap(), cfg);
    let (train, val) = split(kept, cfg.data.val_count);
    let pairs = degrade_faces(&train, cfg, "lq/").unwrap();
    let val_pairs = degrade_faces(&val, cfg, "lq/").unwrap();
    (face_training_set(&train, cfg).unwrap(), pair_training_set(&pairs, cfg).unwrap(), val_pairs)
}

/// Runs the command-line tool in process.
pub fn cli(args: &[&str]) -> i32 {
    authface::cli::run(std::iter::once("authface").chain(args.iter().copied()))
}

/// Relative path and contents of every file under `dir`, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
