mod common;

use authface::data::{align, degrade, gen_face, AlignmentTemplate, DegradationParams, Similarity};
use authface::data::align::warp;
use authface::diffusion::{add_noise, noise_mse, predict_z0, sample, NoiseSchedule};
use authface::facial::{landmarks_to_latent_boxes, time_weight, LandmarkSet, RegionSizes, TimeWeightParams};
use authface::image::Image;
use authface::models::{init_adapter_from_denoiser, Denoiser, TagSet, TagVocab, UNetConfig, LATENT_CHANNELS};
use authface::rng::{normal_tensor, normal_tensor_f64, rng};
use candle_core::{DType, Device, Tensor};
use proptest::prelude::*;

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar().unwrap()
}

fn max_abs(a: &Tensor, b: &Tensor) -> f64 {
    scalar(&(a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inversion_is_exact_in_double(t in 0usize..1000, seed in any::<u64>()) {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let mut g = rng(seed);
        let z0 = normal_tensor_f64(&mut g, &[4, 8, 8]).unwrap();
        let eps = normal_tensor_f64(&mut g, &[4, 8, 8]).unwrap();
        let back = predict_z0(&add_noise(&z0, &eps, t, &s).unwrap(), &eps, t, &s).unwrap();
        prop_assert!(max_abs(&back, &z0) < 1e-10);
    }

    /// Single precision loses `ulp / sqrt(alpha_prod)`; the bound tracks it.
    #[test]
    fn inversion_error_in_single_scales_with_noise_level(t in 0usize..1000, seed in any::<u64>()) {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let mut g = rng(seed);
        let z0 = normal_tensor(&mut g, &[4, 8, 8], DType::F32).unwrap();
        let eps = normal_tensor(&mut g, &[4, 8, 8], DType::F32).unwrap();
        let back = predict_z0(&add_noise(&z0, &eps, t, &s).unwrap(), &eps, t, &s).unwrap();
        let bound = 4.0 * 6e-8 * 5.0 / s.alpha_prod(t).unwrap().sqrt();
        prop_assert!(max_abs(&back, &z0) < bound.max(1e-6));
    }

    #[test]
    fn schedules_are_monotone_and_complementary(steps in 1usize..2000, lo in 1e-6f64..1e-2, span in 0.0f64..0.1) {
        let s = NoiseSchedule::linear(steps, lo, lo + span).unwrap();
        for w in s.alpha_prods().windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        for (a, b) in s.alpha_prods().iter().zip(s.beta_prods()) {
            prop_assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_mse_is_a_symmetric_nonnegative_discrepancy(seed in any::<u64>(), same in any::<bool>()) {
        let mut g = rng(seed);
        let a = normal_tensor_f64(&mut g, &[2, 3, 4]).unwrap();
        let b = if same { a.clone() } else { normal_tensor_f64(&mut g, &[2, 3, 4]).unwrap() };
        let ab = scalar(&noise_mse(&a, &b).unwrap());
        let ba = scalar(&noise_mse(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(ab == 0.0, same);
    }

    #[test]
    fn zero_weight_location_is_symmetric(t in 0.001f64..0.999, s in 0.2f64..3.0) {
        let p = TimeWeightParams { m: 0.0, s, ..Default::default() };
        let (a, b) = (time_weight(t, &p).unwrap(), time_weight(1.0 - t, &p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn region_boxes_have_fixed_size_inside_the_latent(
        ex in 0.0f64..512.0, ey in 0.0f64..400.0, dx in -40.0f64..40.0, mx in 0.0f64..512.0, my in 1.0f64..112.0,
    ) {
        let lm = LandmarkSet { left_eye: [ex, ey], right_eye: [(ex + dx).clamp(0.0, 512.0), ey], mouth: [mx, (ey + my).min(512.0)] };
        prop_assume!(lm.validate(512, 512).is_ok());
        let sizes = RegionSizes::default();
        let b = landmarks_to_latent_boxes(&lm, (512, 512), &sizes).unwrap();
        for (bx, [w, h]) in [(b.eyes, sizes.eyes), (b.mouth, sizes.mouth)] {
            prop_assert_eq!((bx.width(), bx.height()), (w, h));
            prop_assert!(bx.x1 <= 64 && bx.y1 <= 64);
        }
    }

    #[test]
    fn identity_degradation_and_seed_determinism(seed in any::<u64>(), noise in 0.0f64..20.0, blur in 0.0f64..3.0) {
        let mut g = rng(seed);
        let img = Image::from_fn(32, 32, |_, _| {
            use rand::Rng;
            [g.random(), g.random(), g.random()]
        });
        prop_assert_eq!(&degrade(&img, &DegradationParams::identity(), seed).unwrap(), &img);
        let p = DegradationParams { blur_sigma: blur, downscale: 2.0, noise_sigma: noise, jpeg_quality: Some(75) };
        prop_assert_eq!(degrade(&img, &p, seed).unwrap(), degrade(&img, &p, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alignment_undoes_similarity_transforms(angle in -30.0f64..30.0, scale in 0.5f64..2.0, seed in 0u64..50) {
        let face = gen_face(seed, 128).unwrap();
        let tpl = AlignmentTemplate::standard(128, 128);
        let (img, lm) = align(&face.image, &face.landmarks, &tpl).unwrap();
        let t = Similarity::about([64.0, 64.0], angle.to_radians(), scale);
        let moved = warp(&img, &t, 128, 128).unwrap();
        let (_, back) = align(&moved, &t.apply_landmarks(&lm), &tpl).unwrap();
        let (_, exact) = align(&moved, &t.apply_landmarks(&tpl.landmarks()), &tpl).unwrap();
        for (p, q) in back.points().iter().zip(lm.points()) {
            prop_assert!(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() < 0.5);
        }
        for (p, q) in exact.points().iter().zip(tpl.landmarks().points()) {
            prop_assert!(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() < 0.5);
        }
    }

    #[test]
    fn fresh_adapter_is_a_no_op(seed in any::<u64>(), t in 0usize..1000) {
        let cfg = common::tiny_config(seed).model;
        let d = Denoiser::new(cfg, TagVocab::default(), seed, DType::F32).unwrap();
        let a = init_adapter_from_denoiser(&d, seed ^ 1).unwrap();
        let mut g = rng(seed);
        let z = normal_tensor(&mut g, &[2, LATENT_CHANNELS, 8, 8], DType::F32).unwrap();
        let img = normal_tensor(&mut g, &[2, 3, 64, 64], DType::F32).unwrap();
        let ctrl = a.control_features(&img, &z, &[t, t]).unwrap();
        let base = d.forward(&z, &[t, t], &[TagSet::null()], None).unwrap();
        let with = d.forward(&z, &[t, t], &[TagSet::null()], Some(&ctrl)).unwrap();
        prop_assert!(max_abs(&base, &with) <= 1e-6);
    }

    #[test]
    fn sampling_is_a_pure_function_of_seed(seed in any::<u64>()) {
        let cfg = UNetConfig { base_channels: 8, channel_mult: vec![1, 2], time_embed_dim: 16, norm_groups: 4, ..UNetConfig::default() };
        let d = Denoiser::new(cfg, TagVocab::default(), 3, DType::F32).unwrap();
        let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let pred = |z: &Tensor, t: usize| d.forward(z, &[t], &[TagSet::null()], None);
        let shape = [1, LATENT_CHANNELS, 8, 8];
        let a = sample(&pred, &s, &shape, 5, seed, &Device::Cpu, DType::F32).unwrap();
        let b = sample(&pred, &s, &shape, 5, seed, &Device::Cpu, DType::F32).unwrap();
        prop_assert_eq!(max_abs(&a, &b), 0.0);
    }
}
