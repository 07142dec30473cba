//! Draws a handful of procedural faces, aligns them to the standard template
//! and prints their landmarks and tags.
//!
//! cargo run --example gen_faces -- [out_dir] [count]

use authface::data::{align, annotate, gen_face, AlignmentTemplate};
use authface::models::TagVocab;

fn main() -> authface::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "faces_out".into());
    let count: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    std::fs::create_dir_all(&out)?;
    let vocab = TagVocab::default();
    let tpl = AlignmentTemplate::standard(128, 128);
    for seed in 0..count {
        let face = gen_face(seed, 128)?;
        let (aligned, lm) = align(&face.image, &face.landmarks, &tpl)?;
        let tags = annotate(&face.params, &vocab)?;
        face.image.save_png(format!("{out}/face_{seed:03}.png"))?;
        aligned.save_png(format!("{out}/face_{seed:03}_aligned.png"))?;
        println!(
            "seed {seed}: area {:.2} quality {:.2} eyes ({:.1},{:.1}) ({:.1},{:.1}) mouth ({:.1},{:.1})",
            face.params.face_area_fraction(),
            face.quality_score,
            lm.left_eye[0],
            lm.left_eye[1],
            lm.right_eye[0],
            lm.right_eye[1],
            lm.mouth[0],
            lm.mouth[1],
        );
        println!("  {} | {}", tags.semantic_tags.join(", "), tags.photographic_tags.join(", "));
    }
    Ok(())
}
