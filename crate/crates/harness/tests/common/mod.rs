#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evrobust_core::events::VoxelGrid;
use evrobust_core::frames::{write_pgm, write_sequence, BitDepth, FrameSequence, GrayImage};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evrobust"));
    c.env_remove("EVROBUST_SEED");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn evrobust")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn reference(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/reference").join(name)
}

/// Four 8x8 frames brightening along x, 10 ms apart.
pub fn ramp_sequence() -> FrameSequence {
    let frames = (0..4)
        .map(|k| GrayImage::from_fn(8, 8, |y, x| 0.05 + 0.1 * k as f64 * (x + 1) as f64 / 8.0 + 0.01 * y as f64).unwrap())
        .collect();
    FrameSequence::new(frames, vec![0, 10_000, 20_000, 30_000]).unwrap()
}

/// Frames whose 16-bit codes sum to a multiple of the frame count, so the
/// mean is exactly representable after quantisation.
pub fn quantised_sequence(h: usize, w: usize, frames: usize) -> FrameSequence {
    let code = |k: usize, y: usize, x: usize| -> u32 {
        let base = (1000 + 37 * (y * w + x) + 911 * k) as u32 % 60000;
        base
    };
    let mut seq = Vec::new();
    for k in 0..frames {
        let img = GrayImage::from_fn(h, w, |y, x| {
            let mut c = code(k, y, x);
            if k == frames - 1 {
                let s: u32 = (0..frames - 1).map(|j| code(j, y, x)).sum::<u32>() + c;
                c += (frames as u32 - s % frames as u32) % frames as u32;
            }
            f64::from(c) / 65535.0
        })
        .unwrap();
        seq.push(img);
    }
    FrameSequence::new(seq, (0..frames as u64).map(|k| k * 5000).collect()).unwrap()
}

pub fn write_dataset(root: &Path, seq: &FrameSequence, pairs: usize, extra_sharp: bool) {
    write_sequence(seq, root.join("frames"), BitDepth::Sixteen).unwrap();
    if pairs == 0 {
        return;
    }
    std::fs::create_dir_all(root.join("blur")).unwrap();
    std::fs::create_dir_all(root.join("sharp")).unwrap();
    let blur = evrobust_core::dvs::synthesize_blur(seq).unwrap();
    for i in 0..pairs {
        write_pgm(&blur, root.join(format!("blur/{i:04}.pgm")), BitDepth::Sixteen).unwrap();
        write_pgm(&seq.frames()[seq.len() / 2], root.join(format!("sharp/{i:04}.pgm")), BitDepth::Sixteen).unwrap();
    }
    if extra_sharp {
        write_pgm(&seq.frames()[0], root.join("sharp/9999.pgm"), BitDepth::Sixteen).unwrap();
    }
}

/// Alternating-sign unit counts on every cell.
pub fn unit_grid(bins: usize, h: usize, w: usize) -> VoxelGrid {
    VoxelGrid::from_data(bins, h, w, (0..bins * h * w).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect()).unwrap()
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("sweep.cfg");
    std::fs::write(&p, body).unwrap();
    p
}
