mod support;

use evrobust_core::dvs::{fpr, simulate_events, DvsConfig, NoiseModel, DEFAULT_LOG_FLOOR};
use evrobust_core::frames::{FrameSequence, GrayImage};
use evrobust_core::metrics::{psnr, ssim, ImageF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use support::*;

fn to_rows(img: &ImageF) -> Vec<Vec<f64>> {
    let (h, w, _) = img.dims();
    (0..h).map(|y| (0..w).map(|x| img.get(y, x, 0)).collect()).collect()
}

fn random_pair(rng: &mut ChaCha20Rng) -> (ImageF, ImageF) {
    let h = rng.random_range(11..24);
    let w = rng.random_range(11..24);
    let a: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>() * 255.0).collect();
    let b: Vec<f64> = a.iter().map(|v| (v + rng.random_range(-40.0..40.0)).clamp(0.0, 255.0)).collect();
    (ImageF::gray(h, w, a, 255.0).unwrap(), ImageF::gray(h, w, b, 255.0).unwrap())
}

#[test]
fn psnr_and_ssim_match_loops_on_random_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (a, b) = random_pair(&mut rng);
        let (ra, rb) = (to_rows(&a), to_rows(&b));
        assert!((psnr(&a, &b).unwrap().db - psnr_loop(&ra, &rb, 255.0)).abs() < 1e-7);
        assert!((ssim(&a, &b).unwrap() - ssim_loop(&ra, &rb, 255.0)).abs() < 1e-7);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn uniform_offset_psnr_closed_form() {
    let a = ImageF::gray(16, 16, vec![100.0; 256], 255.0).unwrap();
    let b = ImageF::gray(16, 16, vec![116.0; 256], 255.0).unwrap();
    let expected = 20.0 * (255.0f64 / 16.0).log10();
    assert!((psnr(&a, &b).unwrap().db - expected).abs() < 1e-12);
}

#[test]
fn simulator_matches_per_pixel_loop() {
    let (frames, ts) = ramp_frames();
    let seq = FrameSequence::new(
        frames.iter().map(|f| GrayImage::from_fn(8, 8, |y, x| f[y][x]).unwrap()).collect(),
        ts.clone(),
    )
    .unwrap();
    let mut counts = Vec::new();
    for theta in [0.15, 0.3, 0.6] {
        let got = simulate_events(&seq, &DvsConfig::new(theta, NoiseModel::none()).unwrap(), 1).unwrap();
        let got: Vec<_> = got.events().iter().map(|e| (e.t, e.x, e.y, e.polarity.sign())).collect();
        let want = dvs_loop(&frames, &ts, theta, DEFAULT_LOG_FLOOR);
        assert!(!want.is_empty());
        assert_eq!(got, want, "theta {theta}");
        counts.push(got.len());
    }
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
}

#[test]
fn gaussian_fpr_tracks_erfc() {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    for theta in [0.1, 0.5, 1.0, 2.0, 3.0] {
        let e = fpr(theta, &noise, 1_000_000, 3).unwrap();
        let want = gaussian_fpr(theta, 1.0);
        assert!((e.value - want).abs() < 4.0 * e.std_error.max(1e-6), "theta {theta}: {} vs {want}", e.value);
    }
}
