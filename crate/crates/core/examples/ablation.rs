//! Runs the toy pipeline over the weight-location and scale grid and prints
//! one comparable row per configuration.
//!
//! cargo run --example ablation -- [base_config.toml]

use authface::config::RunConfig;
use authface::eval::report::format_f64;
use authface::pipeline::{evaluate_toy, run_toy};

fn main() -> authface::Result<()> {
    let base = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    println!("{:>6} {:>5} {:>10} {:>8} {:>10}", "m", "s", "psnr", "ssim", "fid");
    for m in [-0.5, 0.0, 0.5] {
        for s in [0.5, 1.0] {
            let mut cfg = base.clone();
            cfg.loss.weight.m = m;
            cfg.loss.weight.s = s;
            let run = run_toy(&cfg, |msg| eprintln!("m={m} s={s}: {msg}"))?;
            let r = evaluate_toy(&cfg, &run)?;
            let fid = r.fid.map(format_f64).unwrap_or_else(|| "-".into());
            println!("{m:>6.1} {s:>5.1} {:>10.3} {:>8.4} {fid:>10}", r.mean_psnr, r.mean_ssim);
        }
    }
    Ok(())
}
