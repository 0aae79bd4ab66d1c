mod common;

use common::*;
use proptest::prelude::*;

use vidsolve_core::metrics::{psnr, psnr_with_peak, ssim};
use vidsolve_core::{PixelRange, Shape, VideoTensor};

fn image(h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> VideoTensor {
    VideoTensor::from_fn(Shape::new(1, 1, h, w), PixelRange::Unit, |_, _, y, x| {
        f(y as f64, x as f64) as f32
    })
    .unwrap()
}

fn mod_a(y: f64, x: f64) -> f64 {
    ((y * 13.0 + x * 7.0) % 17.0) / 16.0
}

// Reference values from scikit-image `structural_similarity` with
// gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
// data_range=1 on the same f32 images.
#[test]
fn ssim_matches_reference_implementation() {
    let cases = [
        (
            "mod_patterns",
            image(16, 16, mod_a),
            image(16, 16, |y, x| ((y * 5.0 + x * 11.0) % 19.0) / 18.0),
            -0.0841304235240617,
        ),
        (
            "shifted_wave",
            image(16, 16, |y, x| 0.5 + 0.4 * (0.3 * x).sin() * (0.2 * y).cos()),
            image(16, 16, |y, x| {
                0.5 + 0.4 * (0.3 * x + 0.2).sin() * (0.2 * y).cos()
            }),
            0.975926144667719,
        ),
        (
            "contrast",
            image(20, 13, mod_a),
            image(20, 13, |y, x| mod_a(y, x) * 0.8 + 0.1),
            0.9757413556503524,
        ),
    ];
    for (name, a, b, expect) in cases {
        let got = ssim(&a, &b).unwrap().mean;
        assert!((got - expect).abs() <= 1e-6, "{name}: {got} vs {expect}");
    }
}

#[test]
fn ssim_is_range_invariant_and_rejects_small_frames() {
    let a = random_video(Shape::new(2, 3, 12, 14), PixelRange::Unit, 1);
    let b = random_video(Shape::new(2, 3, 12, 14), PixelRange::Unit, 2);
    let unit = ssim(&a, &b).unwrap();
    let sym = ssim(
        &a.convert_range(PixelRange::Symmetric),
        &b.convert_range(PixelRange::Symmetric),
    )
    .unwrap();
    for (u, s) in unit.per_frame.iter().zip(&sym.per_frame) {
        assert!((u - s).abs() <= 1e-6);
    }
    let tiny = random_video(Shape::new(1, 1, 10, 20), PixelRange::Unit, 3);
    assert!(ssim(&tiny, &tiny).is_err());
}

#[test]
fn psnr_matches_closed_form() {
    let s = Shape::new(3, 1, 8, 8);
    let x = random_video(s, PixelRange::Unit, 4);
    let y = random_video(s, PixelRange::Unit, 5);
    let report = psnr(&x, &y).unwrap();
    for n in 0..3 {
        let mse = x
            .frame_data(n)
            .iter()
            .zip(y.frame_data(n))
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            / 64.0;
        assert!((report.per_frame[n] - 10.0 * (1.0 / mse).log10()).abs() <= 1e-10);
    }
    // A uniform offset of 0.1 gives exactly 20 dB at peak 1 and 26.02 dB at peak 2.
    let z = VideoTensor::filled(s, PixelRange::Unit, 0.25).unwrap();
    let w = VideoTensor::filled(s, PixelRange::Unit, 0.35).unwrap();
    assert!((psnr(&z, &w).unwrap().mean - 20.0).abs() <= 1e-5);
    let sym = psnr(
        &z.convert_range(PixelRange::Symmetric),
        &w.convert_range(PixelRange::Symmetric),
    )
    .unwrap();
    assert!((sym.mean - 20.0).abs() <= 1e-5, "{}", sym.mean);
    assert!((psnr_with_peak(&z, &w, 2.0).unwrap().mean - 26.020599913279625).abs() <= 1e-5);
}

#[test]
fn report_serializes_infinite_frames() {
    let s = Shape::new(2, 1, 4, 4);
    let x = random_video(s, PixelRange::Unit, 6);
    let mut y = x.clone();
    y.data_mut()[0] += 0.5;
    let report = psnr(&x, &y).unwrap();
    assert_eq!(report.infinite_frames, 1);
    assert_eq!(report.mean, report.per_frame[0]);
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["per_frame"][1], "inf");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_bounded_and_symmetric(seed in any::<u64>(), h in 11usize..20, w in 11usize..20) {
        let a = random_video(Shape::new(1, 1, h, w), PixelRange::Unit, seed);
        let b = random_video(Shape::new(1, 1, h, w), PixelRange::Unit, seed ^ 7);
        let ab = ssim(&a, &b).unwrap().mean;
        let ba = ssim(&b, &a).unwrap().mean;
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((ssim(&a, &a).unwrap().mean - 1.0).abs() <= 1e-9);
    }
}
