//! Applies sampled degradations to one face and reports PSNR per draw.
//!
//! cargo run --example degrade_image -- [input.png] [out_dir]

use authface::data::{degrade, gen_face, sample_degradation, DegradationRanges};
use authface::eval::psnr;
use authface::image::Image;
use authface::rng::rng;

fn main() -> authface::Result<()> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(p) => Image::load_png(p)?,
        None => gen_face(7, 128)?.image,
    };
    let out = args.next().unwrap_or_else(|| "degrade_out".into());
    std::fs::create_dir_all(&out)?;
    let mut g = rng(0);
    for i in 0..6 {
        let p = sample_degradation(&mut g, &DegradationRanges::default())?;
        let lq = degrade(&img, &p, i)?;
        lq.save_png(format!("{out}/lq_{i}.png"))?;
        println!(
            "blur {:5.2}  down {:4.2}  noise {:5.2}  jpeg {:>4}  psnr {:6.2} dB",
            p.blur_sigma,
            p.downscale,
            p.noise_sigma,
            p.jpeg_quality.map(|q| q.to_string()).unwrap_or_else(|| "-".into()),
            psnr(&lq, &img)?
        );
    }
    Ok(())
}
