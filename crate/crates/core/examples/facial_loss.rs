//! Evaluates the facial loss on a pair of random latents across timesteps,
//! showing how the weight scales both terms.

use authface::diffusion::NoiseSchedule;
use authface::facial::{facial_loss, landmarks_to_latent_boxes, FacialLossParams, LandmarkSet, RegionDiscriminators, RegionSizes};
use authface::rng::{normal_tensor_f64, rng};
use candle_core::DType;

fn main() -> authface::Result<()> {
    let lm = LandmarkSet { left_eye: [22.0, 26.0], right_eye: [42.0, 26.0], mouth: [32.0, 46.0] };
    let boxes = landmarks_to_latent_boxes(&lm, (64, 64), &RegionSizes::for_image_size(64))?;
    println!("latent boxes: {boxes:?}");
    let d = RegionDiscriminators::new(4, 0, DType::F64)?;
    let mut g = rng(1);
    let real = normal_tensor_f64(&mut g, &[1, 4, 8, 8])?;
    let pred = (&real + normal_tensor_f64(&mut g, &[1, 4, 8, 8])?.affine(0.3, 0.0)?)?;
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let p = FacialLossParams { regions: RegionSizes::for_image_size(64), ..Default::default() };
    let style_only = FacialLossParams { lambda_d: 0.0, ..p };
    for t in [0, 100, 280, 500, 800, 999] {
        let tn = schedule.normalized_time(t);
        let full: f64 = facial_loss(&pred, &real, &[boxes], &[tn], &d, &p)?.to_scalar()?;
        let style: f64 = facial_loss(&pred, &real, &[boxes], &[tn], &d, &style_only)?.to_scalar()?;
        println!("t={t:4} (t_norm {tn:.3}): total {full:10.5}  style {style:10.5}  adversarial {:10.5}", full - style);
    }
    Ok(())
}
