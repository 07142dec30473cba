//! Full toy run: generate faces, train both stages, restore the held-out
//! split and compare PSNR against the degraded inputs.
//!
//! cargo run --example toy_restoration -- [config.toml]

use std::time::Instant;

use authface::config::RunConfig;
use authface::eval::psnr;
use authface::pipeline::run_toy;
use authface::train::log::leading_trailing_means;

fn main() -> authface::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let start = Instant::now();
    let run = run_toy(&cfg, |msg| eprintln!("[{:>6.1}s] {msg}", start.elapsed().as_secs_f64()))?;
    let mut deg = 0.0;
    let mut res = 0.0;
    for (p, r) in run.val.iter().zip(&run.restored) {
        let (d, q) = (psnr(&p.degraded, &p.hq)?, psnr(r, &p.hq)?);
        println!("{:<16} degraded {d:6.2} dB  restored {q:6.2} dB", p.record.hq.image_path);
        deg += d;
        res += q;
    }
    let n = run.val.len() as f64;
    println!("mean degraded {:.3} dB, mean restored {:.3} dB", deg / n, res / n);
    for (name, log) in [("stage 1", run.stage1.log()), ("stage 2", run.stage2.log())] {
        let w = (log.len() / 5).clamp(1, 100);
        if let Some((a, b)) = leading_trailing_means(&log.noise(), w) {
            println!("{name} noise loss: first {w} mean {a:.4}, last {w} mean {b:.4}");
        }
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
