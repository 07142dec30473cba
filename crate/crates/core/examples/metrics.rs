//! PSNR, SSIM and feature FID between two image directories, or between
//! clean and noisy procedural faces when no directories are given.
//!
//! cargo run --example metrics -- [restored_dir gt_dir]

use authface::data::{degrade, gen_face, DegradationParams};
use authface::eval::{feature_fid, psnr, ssim, FeatureExtractor};
use authface::image::Image;

fn load_dir(dir: &str) -> authface::Result<Vec<Image>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    paths.sort();
    paths.iter().filter(|p| p.extension().is_some_and(|e| e == "png")).map(Image::load_png).collect()
}

fn main() -> authface::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = if let [r, g] = args.as_slice() {
        (load_dir(r)?, load_dir(g)?)
    } else {
        let clean: Vec<Image> = (0..40).map(|s| gen_face(s, 64).map(|f| f.image)).collect::<Result<_, _>>()?;
        let p = DegradationParams { noise_sigma: 12.0, ..DegradationParams::identity() };
        let noisy = clean.iter().enumerate().map(|(i, c)| degrade(c, &p, i as u64)).collect::<Result<Vec<_>, _>>()?;
        (noisy, clean)
    };
    let n = a.len().min(b.len());
    let mut ps = 0.0;
    let mut ss = 0.0;
    for (x, y) in a.iter().zip(&b) {
        ps += psnr(x, y)?;
        ss += ssim(x, y)?;
    }
    println!("{n} pairs: mean PSNR {:.3} dB, mean SSIM {:.4}", ps / n as f64, ss / n as f64);
    let fx = FeatureExtractor::new(16, 0);
    if n > fx.dim() {
        println!("feature FID {:.5}", feature_fid(&a, &b, &fx)?);
    }
    Ok(())
}
