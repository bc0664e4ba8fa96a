mod common;

use common::*;
use evrobust_core::dvs::NoiseModel;
use evrobust_core::frames::{FrameSequence, GrayImage};
use evrobust_harness::ingest::ingest_dataset;
use evrobust_harness::pipeline::{simulate_pipeline, verify_manifest, SimulateOptions};

fn opts(thetas: Vec<f64>, noise: NoiseModel) -> SimulateOptions {
    SimulateOptions { thetas, noise, bins: 4, levels: vec![0.0, 0.5], seed: 2 }
}

#[test]
fn frames_only_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ramp_sequence(), 0, false);
    let ds = ingest_dataset(dir.path()).unwrap();
    assert_eq!(ds.frames.as_ref().unwrap().len(), 4);
    assert!(ds.events.is_none() && ds.pairs.is_empty());
    assert_eq!(ds.blur_mismatch().unwrap(), None);
    assert_eq!(ds.summary(), "4 frames (8x8)");
}

#[test]
fn unequal_pair_counts_name_the_extra_file() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ramp_sequence(), 2, true);
    let msg = ingest_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("9999.pgm"), "{msg}");
    assert!(msg.contains("2 blurred vs 3 sharp"), "{msg}");
}

#[test]
fn full_dataset_blur_matches_frame_mean() {
    let dir = tempfile::tempdir().unwrap();
    let seq = quantised_sequence(6, 10, 4);
    write_dataset(dir.path(), &seq, 3, false);
    std::fs::write(dir.path().join("rec.evt"), "EVT1 10 6 0 15000\n0 1 1 1\n7000 2 3 -1\n").unwrap();
    let ds = ingest_dataset(dir.path()).unwrap();
    assert_eq!(ds.pairs.len(), 3);
    assert_eq!(ds.events.as_ref().unwrap().len(), 2);
    let mismatch = ds.blur_mismatch().unwrap().unwrap();
    assert!(mismatch <= 1e-6, "{mismatch}");

    std::fs::write(dir.path().join("second.evt"), "EVT1 10 6 0 15000\n").unwrap();
    assert!(ingest_dataset(dir.path()).unwrap_err().to_string().contains("2 event files"));
}

#[test]
fn lone_blur_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("blur")).unwrap();
    assert!(ingest_dataset(dir.path()).unwrap_err().to_string().contains("sharp"));
}

#[test]
fn static_scene_without_noise_yields_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let f = GrayImage::from_fn(5, 5, |y, x| 0.2 + 0.03 * (y + x) as f64).unwrap();
    let seq = FrameSequence::new(vec![f.clone(), f.clone(), f], vec![0, 1000, 2000]).unwrap();
    let m = simulate_pipeline(&seq, &opts(vec![0.05], NoiseModel::none()), dir.path()).unwrap();
    assert_eq!(m.thetas[0].events, 0);
    assert_eq!(m.thetas[0].nonzero_cells, 0);
}

#[test]
fn event_counts_fall_as_threshold_rises() {
    let dir = tempfile::tempdir().unwrap();
    let thetas = vec![0.05, 0.1, 0.2, 0.4, 0.8];
    let m = simulate_pipeline(&ramp_sequence(), &opts(thetas.clone(), NoiseModel::none()), dir.path()).unwrap();
    let counts: Vec<usize> = m.thetas.iter().map(|t| t.events).collect();
    assert!(counts[0] > 0);
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert_eq!(m.entries.len(), 1 + thetas.len() * 4);
}

#[test]
fn manifest_detects_tampering_and_reproduces() {
    let seq = ramp_sequence();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = opts(vec![0.1], NoiseModel::new(0.5, 0.01).unwrap());
    let ma = simulate_pipeline(&seq, &o, a.path()).unwrap();
    let mb = simulate_pipeline(&seq, &o, b.path()).unwrap();
    assert_eq!(ma.entries, mb.entries);
    assert!(verify_manifest(a.path()).unwrap().is_empty());
    std::fs::write(a.path().join("blur.pgm"), b"P2\n1 1\n255\n0\n").unwrap();
    assert_eq!(verify_manifest(a.path()).unwrap(), vec!["blur.pgm".to_string()]);
}

#[test]
fn sweep_directory_input_simulates_from_frames() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("ds"), &ramp_sequence(), 0, false);
    let cfg = write_config(dir.path(), "input = ds\noutput = r.csv\nlevels = 0, 0.5\ntheta = 0.05\nbins = 4\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let first = csv.lines().nth(3).unwrap();
    assert!(first.starts_with("0,under_report,0,"), "{first}");
}
