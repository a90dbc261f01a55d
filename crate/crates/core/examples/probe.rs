// scratch probe: category means under different noise settings
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use egomotion::estimator::{estimate_motion, EstimatorConfig};
use egomotion::evaluation::{apply_noise, derive_seed, evaluate_sequence, synthetic_texture, MotionType, NoiseKind};
use egomotion::geometry::MotionParams;
use egomotion::imaging::{warp_image, ImageBuffer, Intrinsics};

type P = MotionParams<f64>;

fn random_in_range(rng: &mut ChaCha8Rng) -> P {
    let theta = std::f64::consts::PI - 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let alpha = 0.03 * rng.gen::<f64>();
    let beta = -0.05 + 0.10 * rng.gen::<f64>();
    let a = -0.09 + 0.18 * rng.gen::<f64>();
    let b = -0.09 + 0.18 * rng.gen::<f64>();
    let c = -0.03 + 0.06 * rng.gen::<f64>();
    P::new(theta, alpha, beta, a, b, c)
}

fn quantize(img: &ImageBuffer<f64>) -> ImageBuffer<f64> {
    ImageBuffer::from_fn(img.width(), img.height(), |i, j| img.get(i, j).round().clamp(0.0, 255.0))
}

fn main() {
    let quant = std::env::var("QUANT").is_ok();
    let big = 256 + 96;
    let base = synthetic_texture::<f64>(big, big, 0xBA5E);
    let focal = 128.0;
    let intr_base = Intrinsics { focal_px: focal, cx: (big - 1) as f64 / 2.0, cy: (big - 1) as f64 / 2.0 };
    let intr = Intrinsics { focal_px: focal, cx: 127.5, cy: 127.5 };
    let config = EstimatorConfig::default();
    for mt in [MotionType::Plain, MotionType::PureTranslation, MotionType::PureRotation] {
        for (label, noise) in [
            ("clean", None),
            ("impulse10", Some((NoiseKind::Impulse, 10.0))),
            ("gauss10", Some((NoiseKind::Gaussian, 10.0))),
        ] {
            let mut truth = Vec::new();
            let mut estimates = Vec::new();
            for k in 0..50u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x6006, mt as u64, k));
                let p = random_in_range(&mut rng);
                let p = match mt {
                    MotionType::Plain => p,
                    MotionType::PureTranslation => P::new(0.0, 0.0, 0.0, p.a, p.b, p.c),
                    MotionType::PureRotation => P::new(p.theta, p.alpha, p.beta, 0.0, 0.0, 0.0),
                };
                let mut f = base.crop(48, 48, 256, 256).unwrap();
                let (g_full, _) = warp_image(&base, &p.psi_map().unwrap(), &intr_base).unwrap();
                let mut g = g_full.crop(48, 48, 256, 256).unwrap();
                if quant { f = quantize(&f); g = quantize(&g); }
                if let Some((kind, level)) = noise {
                    f = apply_noise(&f, kind, level, derive_seed(0x7007, k, 0));
                    g = apply_noise(&g, kind, level, derive_seed(0x7007, k, 1));
                }
                truth.push(p);
                estimates.push(estimate_motion(&f, &g, &intr, &config).unwrap().params);
            }
            let mean = evaluate_sequence(mt, &truth, &estimates).unwrap().mean;
            println!("{mt:?} {label}: dir {:?} axis {:?} abs {:?} rel {:?}",
                mean.translation_direction_deg, mean.rotation_axis_deg,
                mean.rotation_angle_abs_deg, mean.rotation_angle_rel);
        }
    }
}
