//! The `authface` command-line tool. Every subcommand reads an optional TOML
//! configuration, takes its seed from `--seed` (overriding the file) and
//! writes only under `--out`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::manifest::{load_pair_images, load_record_image, read_jsonl, write_jsonl};
use crate::data::{curate_lines, FaceRecord, PairRecord};
use crate::error::{invalid, Error, Result};
use crate::eval::{config_hash, evaluate, FeatureExtractor, MetricReport, Restorer};
use crate::image::Image;
use crate::pipeline::{degrade_faces, generate_faces, restore_seed, run_settings, split, FaceEntry};
use crate::train::{init_denoiser, Checkpoint, Stage1Trainer, Stage2Trainer, TrainingSet};

#[derive(Parser, Debug)]
#[command(name = "authface", version, about = "Desk-scale diffusion face restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw procedural faces with exact landmarks and tags.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize degraded copies of a face manifest.
    Degrade {
        #[command(flatten)]
        common: Common,
        /// Face manifest (JSON lines).
        #[arg(long)]
        input: PathBuf,
    },
    /// Filter a face manifest by face size and quality and split off validation faces.
    Curate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Fine-tune the denoiser on a face manifest.
    TrainStage1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Continue from a stage-1 checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the adapter and discriminators on a pair manifest.
    TrainStage2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Stage-1 checkpoint holding the denoiser to freeze.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a stage-2 checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Restore degraded images with a stage-2 checkpoint.
    Restore {
        #[command(flatten)]
        common: Common,
        /// Pair manifest or a directory of PNG files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare restored images with references of the same file name.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        restored: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Collect metric reports into one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Metric report files or directories containing `metrics.json`.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData { common }
            | Command::Degrade { common, .. }
            | Command::Curate { common, .. }
            | Command::TrainStage1 { common, .. }
            | Command::TrainStage2 { common, .. }
            | Command::Restore { common, .. }
            | Command::Eval { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code: 0 on success, 2 for invalid arguments or
/// configuration, 1 for failures while running.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let common = cli.command.common().clone();
    let cfg = match load_config(&common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match dispatch(cli.command, &cfg, &common.out) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(invalid(msg))
}

fn require_file(p: &Path) -> std::result::Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a file", p.display())))
    }
}

fn require_dir(p: &Path) -> std::result::Result<(), Failure> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a directory", p.display())))
    }
}

fn dispatch(cmd: Command, cfg: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    match cmd {
        Command::GenData { .. } => gen_data(cfg, out)?,
        Command::Degrade { input, .. } => {
            require_file(&input)?;
            degrade_cmd(cfg, &input, out)?
        }
        Command::Curate { input, .. } => {
            require_file(&input)?;
            curate_cmd(cfg, &input, out)?
        }
        Command::TrainStage1 { input, resume, .. } => {
            require_file(&input)?;
            if let Some(r) = &resume {
                require_file(r)?;
            }
            train_stage1_cmd(cfg, &input, resume.as_deref(), out)?
        }
        Command::TrainStage2 { input, checkpoint, resume, .. } => {
            require_file(&input)?;
            let init = checkpoint.or_else(|| cfg.stage2.init_checkpoint.as_ref().map(PathBuf::from));
            match (&init, &resume) {
                (None, None) => return Err(usage("stage 2 needs --checkpoint (a stage-1 checkpoint) or --resume")),
                (Some(p), _) | (None, Some(p)) => require_file(p)?,
            }
            if let Some(r) = &resume {
                require_file(r)?;
            }
            train_stage2_cmd(cfg, &input, init.as_deref(), resume.as_deref(), out)?
        }
        Command::Restore { input, checkpoint, .. } => {
            require_file(&checkpoint)?;
            if !input.exists() {
                return Err(usage(format!("{} does not exist", input.display())));
            }
            restore_cmd(cfg, &input, &checkpoint, out)?
        }
        Command::Eval { restored, gt, .. } => {
            require_dir(&restored)?;
            require_dir(&gt)?;
            eval_cmd(cfg, &restored, &gt, out)?
        }
        Command::Report { input, .. } => {
            for p in &input {
                if !p.exists() {
                    return Err(usage(format!("{} does not exist", p.display())));
                }
            }
            report_cmd(&input, out)?
        }
    }
    Ok(())
}

fn file_name(p: &str) -> &str {
    p.rsplit('/').next().unwrap_or(p)
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dir = out.join("hq");
    std::fs::create_dir_all(&dir)?;
    let faces = generate_faces(cfg)?;
    let mut records = Vec::with_capacity(faces.len());
    for f in faces {
        let mut r = f.record;
        f.image.save_png(dir.join(&r.image_path))?;
        r.image_path = format!("hq/{}", r.image_path);
        records.push(r);
    }
    write_jsonl(out.join("faces.jsonl"), &records)?;
    println!("wrote {} faces to {}", records.len(), out.display());
    Ok(())
}

/// Copies a record's image under `out/hq/` and points the record at it.
fn copy_hq(manifest: &Path, rec: &FaceRecord, out: &Path) -> Result<(FaceRecord, Image)> {
    let img = load_record_image(manifest, rec)?;
    let name = file_name(&rec.image_path).to_string();
    img.save_png(out.join("hq").join(&name))?;
    Ok((FaceRecord { image_path: format!("hq/{name}"), ..rec.clone() }, img))
}

fn curate_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let text = std::fs::read_to_string(input)?;
    let outcome = curate_lines(text.lines(), &cfg.curation);
    std::fs::create_dir_all(out.join("hq"))?;
    let kept = outcome
        .kept
        .iter()
        .map(|r| copy_hq(input, r, out).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(out.join("curated.jsonl"), &kept)?;
    write_jsonl(out.join("rejections.jsonl"), &outcome.rejected)?;
    let (train, val) = split(kept, cfg.data.val_count);
    write_jsonl(out.join("train.jsonl"), &train)?;
    write_jsonl(out.join("val.jsonl"), &val)?;
    println!("kept {} ({} train, {} val), rejected {}", train.len() + val.len(), train.len(), val.len(), outcome.rejected.len());
    Ok(())
}

fn degrade_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let records: Vec<FaceRecord> = read_jsonl(input)?;
    std::fs::create_dir_all(out.join("hq"))?;
    std::fs::create_dir_all(out.join("lq"))?;
    let faces = records
        .iter()
        .map(|r| copy_hq(input, r, out).map(|(record, image)| FaceEntry { record, image }))
        .collect::<Result<Vec<_>>>()?;
    let pairs = degrade_faces(&faces, cfg, "lq/")?;
    for p in &pairs {
        p.degraded.save_png(out.join(&p.record.degraded_path))?;
    }
    let records: Vec<PairRecord> = pairs.into_iter().map(|p| p.record).collect();
    write_jsonl(out.join("pairs.jsonl"), &records)?;
    println!("degraded {} images", records.len());
    Ok(())
}

/// Training settings that a resumed run takes from the new configuration;
/// everything else comes from the checkpoint.
fn resumed_config(ck: &Checkpoint, cfg: &RunConfig) -> RunConfig {
    let mut c = ck.meta.config.clone();
    c.stage1.max_iters = cfg.stage1.max_iters;
    c.stage1.checkpoint_every = cfg.stage1.checkpoint_every;
    c.stage2.max_iters = cfg.stage2.max_iters;
    c.stage2.checkpoint_every = cfg.stage2.checkpoint_every;
    c
}

fn train_stage1_cmd(cfg: &RunConfig, input: &Path, resume: Option<&Path>, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut trainer = match resume {
        Some(p) => {
            let mut ck = Checkpoint::load(p)?;
            ck.meta.config = resumed_config(&ck, cfg);
            Stage1Trainer::from_checkpoint(&ck)?
        }
        None => Stage1Trainer::new(cfg.clone(), init_denoiser(cfg)?)?,
    };
    let run_cfg = trainer.checkpoint().meta.config;
    let data = TrainingSet::from_face_manifest(input, &run_cfg.facial_params().regions, candle_core::DType::F32)?;
    let log_path = out.join("stage1_loss.csv");
    let result = trainer.run(&data, |t| {
        t.checkpoint().save(out.join(format!("stage1_iter{:06}.safetensors", t.iteration())))
    });
    trainer.log().append_csv(&log_path)?;
    if let Err(e @ Error::TrainingAborted { .. }) = result {
        trainer.checkpoint().save(out.join("stage1_aborted.safetensors"))?;
        return Err(e);
    }
    result?;
    trainer.checkpoint().save(out.join("stage1.safetensors"))?;
    println!("stage 1 finished at iteration {}", trainer.iteration());
    Ok(())
}

fn train_stage2_cmd(cfg: &RunConfig, input: &Path, init: Option<&Path>, resume: Option<&Path>, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut trainer = match (resume, init) {
        (Some(p), _) => {
            let mut ck = Checkpoint::load(p)?;
            ck.meta.config = resumed_config(&ck, cfg);
            Stage2Trainer::from_checkpoint(&ck)?
        }
        (None, Some(p)) => Stage2Trainer::from_stage1(&Checkpoint::load(p)?, cfg.clone())?,
        (None, None) => return Err(invalid("stage 2 needs a stage-1 checkpoint")),
    };
    let run_cfg = trainer.checkpoint().meta.config;
    let data = TrainingSet::from_pair_manifest(input, &run_cfg.facial_params().regions, candle_core::DType::F32)?;
    let log_path = out.join("stage2_loss.csv");
    let result = trainer.run(&data, |t| {
        t.checkpoint().save(out.join(format!("stage2_iter{:06}.safetensors", t.iteration())))
    });
    trainer.log().append_csv(&log_path)?;
    if let Err(e @ Error::TrainingAborted { .. }) = result {
        trainer.checkpoint().save(out.join("stage2_aborted.safetensors"))?;
        return Err(e);
    }
    result?;
    trainer.checkpoint().save(out.join("stage2.safetensors"))?;
    println!("stage 2 finished at iteration {}", trainer.iteration());
    Ok(())
}

/// `(file name, image)` for every PNG in `dir`, sorted by name.
fn read_png_dir(dir: &Path) -> Result<Vec<(String, Image)>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    names.into_iter().map(|n| Ok((n.clone(), Image::load_png(dir.join(&n))?))).collect()
}

fn restore_cmd(cfg: &RunConfig, input: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let inputs: Vec<(String, Image)> = if input.is_dir() {
        read_png_dir(input)?
    } else {
        let pairs: Vec<PairRecord> = read_jsonl(input)?;
        pairs
            .iter()
            .map(|p| Ok((file_name(&p.degraded_path).to_string(), load_pair_images(input, p)?.1)))
            .collect::<Result<_>>()?
    };
    if inputs.is_empty() {
        return Err(invalid(format!("no images found in {}", input.display())));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let restorer = Restorer::from_checkpoint(&ck)?.with_clip(cfg.sampling.clip);
    let dir = out.join("restored");
    std::fs::create_dir_all(&dir)?;
    for (i, (name, img)) in inputs.iter().enumerate() {
        restorer.restore(img, cfg.sampling.num_steps, restore_seed(cfg, i))?.save_png(dir.join(name))?;
    }
    println!("restored {} images", inputs.len());
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, restored: &Path, gt: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let r = read_png_dir(restored)?;
    let g: BTreeMap<String, Image> = read_png_dir(gt)?.into_iter().collect();
    let mut names = Vec::new();
    let (mut ri, mut gi) = (Vec::new(), Vec::new());
    for (n, img) in r {
        if let Some(ref_img) = g.get(&n) {
            names.push(n);
            ri.push(img);
            gi.push(ref_img.clone());
        }
    }
    if names.is_empty() {
        return Err(invalid("no file names shared between the restored and reference directories"));
    }
    let fx = FeatureExtractor::new(cfg.eval.feature_dim, cfg.eval.feature_seed);
    let mut report = evaluate(&names, &ri, &gi, &fx, config_hash(cfg)?, cfg.seed)?;
    report.settings = run_settings(cfg);
    report.write(out, "metrics")?;
    println!(
        "{} images: PSNR {} dB, SSIM {:.4}, FID {}",
        names.len(),
        crate::eval::report::format_f64(report.mean_psnr),
        report.mean_ssim,
        report.fid.map(crate::eval::report::format_f64).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn report_cmd(inputs: &[PathBuf], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for p in inputs {
        let file = if p.is_dir() { p.join("metrics.json") } else { p.clone() };
        let report = MetricReport::from_json(&std::fs::read_to_string(&file)?)?;
        let label = file
            .parent()
            .and_then(|d| d.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        rows.push((label, report));
    }
    let keys: std::collections::BTreeSet<String> = rows.iter().flat_map(|(_, r)| r.settings.keys().cloned()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["psnr", "ssim", "fid", "seed", "config_hash"].map(String::from));
    w.write_record(&header)?;
    for (label, r) in &rows {
        let mut rec = vec![label.clone()];
        rec.extend(keys.iter().map(|k| r.settings.get(k).map(|v| v.to_string()).unwrap_or_default()));
        rec.push(crate::eval::report::format_f64(r.mean_psnr));
        rec.push(crate::eval::report::format_f64(r.mean_ssim));
        rec.push(r.fid.map(crate::eval::report::format_f64).unwrap_or_default());
        rec.push(r.seed.to_string());
        rec.push(r.config_hash.clone());
        w.write_record(&rec)?;
    }
    let csv_bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    std::fs::write(out.join("report.csv"), csv_bytes)?;
    let json: Vec<_> = rows.iter().map(|(l, r)| serde_json::json!({ "run": l, "report": r })).collect();
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    println!("collected {} reports", rows.len());
    Ok(())
}
