mod common;

use std::path::Path;

use authface::eval::MetricReport;
use authface::image::Image;
use common::cli;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn argument_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["frobnicate", "--out", s(&out)]), 2);
    assert_eq!(cli(&["gen-data"]), 2);
    assert_eq!(cli(&["gen-data", "--out", s(&out), "--seed", "abc"]), 2);
    assert_eq!(cli(&["gen-data", "--out", s(&out), "--config", "/nonexistent.toml"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nnot_a_key = 3\n").unwrap();
    assert_eq!(cli(&["gen-data", "--out", s(&out), "--config", s(&bad)]), 2);
    std::fs::write(&bad, "[stage1]\nbatch_size = 0\n").unwrap();
    assert_eq!(cli(&["gen-data", "--out", s(&out), "--config", s(&bad)]), 2);
    assert_eq!(cli(&["curate", "--input", "/nonexistent.jsonl", "--out", s(&out)]), 2);
    assert_eq!(cli(&["train-stage2", "--input", s(&bad), "--out", s(&out)]), 2);
    assert!(!out.exists(), "argument errors must not create outputs");
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["eval", "--help"]), 0);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.safetensors");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let imgs = dir.path().join("imgs");
    std::fs::create_dir_all(&imgs).unwrap();
    Image::filled(64, 64, [0.5; 3]).save_png(imgs.join("a.png")).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["restore", "--input", s(&imgs), "--checkpoint", s(&junk), "--out", s(&out)]), 1);
}

#[test]
fn eval_of_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    std::fs::create_dir_all(&imgs).unwrap();
    for seed in 0..6 {
        authface::data::gen_face(seed, 64).unwrap().image.save_png(imgs.join(format!("f{seed}.png"))).unwrap();
    }
    let cfg = dir.path().join("cfg.toml");
    common::write_config(&common::tiny_config(0), &cfg);
    let out = dir.path().join("eval");
    assert_eq!(cli(&["eval", "--restored", s(&imgs), "--gt", s(&imgs), "--out", s(&out), "--config", s(&cfg)]), 0);
    let json = std::fs::read_to_string(out.join("metrics.json")).unwrap();
    assert!(json.contains("\"inf\""));
    let r = MetricReport::from_json(&json).unwrap();
    assert_eq!(r.images.len(), 6);
    assert!(r.images.iter().all(|m| m.psnr == f64::INFINITY && m.ssim == 1.0));
    assert!(r.fid.unwrap().abs() < 1e-6);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().nth(1).unwrap().starts_with("f0.png,inf,1,"));
}

#[test]
fn identity_degradation_keeps_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny_config(1);
    cfg.degradation.blur_sigma = [0.0, 0.0];
    cfg.degradation.downscale = [1.0, 1.0];
    cfg.degradation.noise_sigma = [0.0, 0.0];
    cfg.degradation.lossless = true;
    let cfg_path = dir.path().join("cfg.toml");
    common::write_config(&cfg, &cfg_path);
    let gen = dir.path().join("gen");
    let deg = dir.path().join("deg");
    assert_eq!(cli(&["gen-data", "--config", s(&cfg_path), "--out", s(&gen)]), 0);
    assert_eq!(cli(&["degrade", "--config", s(&cfg_path), "--input", s(&gen.join("faces.jsonl")), "--out", s(&deg)]), 0);
    let mut n = 0;
    for e in std::fs::read_dir(deg.join("hq")).unwrap() {
        let name = e.unwrap().file_name();
        let hq = image::open(deg.join("hq").join(&name)).unwrap().to_rgb8();
        let lq = image::open(deg.join("lq").join(&name)).unwrap().to_rgb8();
        assert_eq!(hq.as_raw(), lq.as_raw());
        n += 1;
    }
    assert_eq!(n, 20);
}

#[test]
fn resumed_training_matches_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    let cfg = common::tiny_config(2);
    common::write_config(&cfg, &cfg_path);
    let gen = dir.path().join("gen");
    let cur = dir.path().join("cur");
    assert_eq!(cli(&["gen-data", "--config", s(&cfg_path), "--out", s(&gen)]), 0);
    assert_eq!(cli(&["curate", "--config", s(&cfg_path), "--input", s(&gen.join("faces.jsonl")), "--out", s(&cur)]), 0);
    let train = cur.join("train.jsonl");
    let full = dir.path().join("full");
    assert_eq!(cli(&["train-stage1", "--config", s(&cfg_path), "--input", s(&train), "--out", s(&full)]), 0);
    let resumed = dir.path().join("resumed");
    let partial = full.join("stage1_iter000002.safetensors");
    assert_eq!(
        cli(&["train-stage1", "--config", s(&cfg_path), "--input", s(&train), "--resume", s(&partial), "--out", s(&resumed)]),
        0
    );
    assert_eq!(std::fs::read(full.join("stage1.safetensors")).unwrap(), std::fs::read(resumed.join("stage1.safetensors")).unwrap());
    let log = std::fs::read_to_string(resumed.join("stage1_loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
}

#[test]
fn divergent_stage2_aborts_with_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny_config(3);
    cfg.stage2.learning_rate = 1e30;
    cfg.stage2.max_iters = 20;
    let cfg_path = dir.path().join("cfg.toml");
    common::write_config(&cfg, &cfg_path);
    let c = s(&cfg_path);
    let p = |x: &str| dir.path().join(x).to_string_lossy().into_owned();
    assert_eq!(cli(&["gen-data", "--config", c, "--out", &p("gen")]), 0);
    assert_eq!(cli(&["curate", "--config", c, "--input", &p("gen/faces.jsonl"), "--out", &p("cur")]), 0);
    assert_eq!(cli(&["degrade", "--config", c, "--input", &p("cur/train.jsonl"), "--out", &p("deg")]), 0);
    assert_eq!(cli(&["train-stage1", "--config", c, "--input", &p("cur/train.jsonl"), "--out", &p("s1")]), 0);
    let code = cli(&[
        "train-stage2",
        "--config",
        c,
        "--input",
        &p("deg/pairs.jsonl"),
        "--checkpoint",
        &p("s1/stage1.safetensors"),
        "--out",
        &p("s2"),
    ]);
    assert_eq!(code, 1);
    assert!(dir.path().join("s2/stage2_aborted.safetensors").exists());
    assert!(!dir.path().join("s2/stage2.safetensors").exists());
}
