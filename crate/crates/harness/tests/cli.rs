mod common;

use common::*;
use evrobust_harness::exit;

fn sweep_fixture(dir: &std::path::Path, extra: &str) -> std::path::PathBuf {
    unit_grid(6, 24, 24).write(dir.join("grid.vox")).unwrap();
    write_config(
        dir,
        &format!("input = grid.vox\noutput = out/result.csv\nlevels = 0, 0.05, 0.1, 0.15, 0.2, 0.3\nseed = 11\n{extra}"),
    )
}

#[test]
fn sweep_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 4, 1] {
        let cfg = sweep_fixture(dir.path(), &format!("workers = {workers}\n"));
        let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
        outputs.push(std::fs::read(dir.path().join("out/result.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert!(dir.path().join("out/result.csv.meta").is_file());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert_eq!(leftovers.len(), 2, "only the CSV and its sidecar remain");
}

#[test]
fn seed_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_fixture(dir.path(), "");
    let o = bin().args(["sweep", "--config", cfg.to_str().unwrap()]).env("EVROBUST_SEED", "99").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/result.csv")).unwrap();
    assert!(csv.starts_with("# seed = 99\n"), "{csv}");
    let bad = bin().args(["sweep", "--config", cfg.to_str().unwrap()]).env("EVROBUST_SEED", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(exit::VALIDATION));
}

#[test]
fn invalid_levels_and_inputs_exit_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    unit_grid(6, 4, 4).write(dir.path().join("grid.vox")).unwrap();
    let cfg = write_config(dir.path(), "input = grid.vox\noutput = r.csv\nlevels = 0, 1.2\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::VALIDATION));
    assert!(stderr(&o).contains("1.2"), "{}", stderr(&o));
    let cfg = write_config(dir.path(), "input = missing_dir\noutput = r.csv\nlevels = 0\n");
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(exit::VALIDATION));
    let cfg = write_config(dir.path(), "input = grid.vox\noutput = r.csv\nlevels = 0\nbins = 3\n");
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(exit::VALIDATION));
}

#[test]
fn compare_against_itself_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_fixture(dir.path(), "");
    assert!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.success());
    let res = dir.path().join("out/result.csv");
    let o = run(&["compare", "--result", res.to_str().unwrap(), "--reference", res.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stdout(&o));
    assert!(stdout(&o).contains("max |delta|:    0.000000"));

    let table = reference("table1_ours.csv");
    let o = run(&["compare", "--result", res.to_str().unwrap(), "--reference", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    let row = stdout(&o).lines().find(|l| l.trim_start().starts_with("0.3 ")).unwrap().to_string();
    assert!(row.contains("36.8900") && row.contains("0.9781"), "{row}");

    let short = reference("table5_ur_ours.csv");
    let o = run(&["compare", "--result", res.to_str().unwrap(), "--reference", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::VALIDATION));
}

#[test]
fn compare_flags_out_of_tolerance_levels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tampered.csv");
    std::fs::write(
        &p,
        "level,mode,empirical,events_before,events_after,nonzero_before,nonzero_after,psnr,ssim,feat_mean,feat_var,feat_max\n\
         0,under_report,0,100,100,10000,10000,99,1,,,\n\
         0.2,under_report,0.25,100,75,10000,7500,30,0.9,,,\n",
    )
    .unwrap();
    let o = run(&["compare", "--result", p.to_str().unwrap(), "--reference", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::INVARIANT));
    assert!(stdout(&o).contains("FAIL level 0.2:"), "{}", stdout(&o));
}

#[test]
fn thin_encode_and_metrics_commands() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.vox");
    unit_grid(2, 50, 50).write(&g).unwrap();
    let t = dir.path().join("t.vox");
    let o = run(&["thin", "--in", g.to_str().unwrap(), "--alpha", "1", "--seed", "7", "--out", t.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("empirical UR 1.000000"));
    let o = run(&["rps-thin", "--in", g.to_str().unwrap(), "--alpha", "0", "--out", t.to_str().unwrap()]);
    assert!(stdout(&o).contains("empirical UR 0.000000"));
    assert_eq!(run(&["thin", "--in", g.to_str().unwrap(), "--alpha", "1.5", "--out", t.to_str().unwrap()]).status.code(), Some(exit::VALIDATION));

    let evt = dir.path().join("e.evt");
    std::fs::write(&evt, "EVT1 4 3 0 100\n0 0 0 1\n50 1 2 -1\n99 3 1 1\n").unwrap();
    let v = dir.path().join("e.vox");
    let o = run(&["encode", "--events", evt.to_str().unwrap(), "--bins", "2", "--out", v.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(evrobust_core::events::VoxelGrid::read(&v).unwrap().nonzero_count(), 3);

    let seq = ramp_sequence();
    let a = dir.path().join("a.pgm");
    evrobust_core::frames::write_pgm(&seq.frames()[1], &a, evrobust_core::frames::BitDepth::Eight).unwrap();
    let o = run(&["metrics", "--a", a.to_str().unwrap(), "--b", a.to_str().unwrap()]);
    assert!(stdout(&o).contains("psnr 99.000000 dB (exact match)"), "{}", stdout(&o));
    assert!(stdout(&o).contains("ssim n/a"));
}

#[test]
fn sweep_with_smoke_weights_fills_feature_columns() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.mrmw");
    let o = run(&["init-weights", "--c", "2", "--t", "2", "--heads", "2", "--bins", "6", "--seed", "3", "--out", w.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = sweep_fixture(dir.path(), "weights = w.mrmw\ncrop = 16\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/result.csv")).unwrap();
    for line in csv.lines().skip(3) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 12);
        assert!(fields[9..].iter().all(|f| f.parse::<f64>().map(f64::is_finite).unwrap_or(false)), "{line}");
    }
    let first = csv.clone();
    assert!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("out/result.csv")).unwrap(), first);

    std::fs::write(&w, "MRMW1\nSECTION meta.config\nT4 1 1 1 4\n2 2 2 1\n").unwrap();
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(exit::VALIDATION));
}

#[test]
fn simulate_writes_manifest_with_reproducible_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    evrobust_core::frames::write_sequence(&ramp_sequence(), &frames, evrobust_core::frames::BitDepth::Sixteen).unwrap();
    let mut manifests = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(&[
            "simulate", "--frames", frames.to_str().unwrap(), "--theta", "0.1,0.3", "--out", out.to_str().unwrap(),
            "--sigma", "0.02", "--seed", "5",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        manifests.push(std::fs::read_to_string(out.join("manifest.txt")).unwrap());
        assert!(evrobust_harness::pipeline::verify_manifest(&out).unwrap().is_empty());
    }
    assert_eq!(manifests[0], manifests[1]);
    // blur + 2 x (events, voxel, 3 thinned)
    assert_eq!(manifests[0].lines().count(), 11);
}
