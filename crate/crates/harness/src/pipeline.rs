//! Frames to artifacts: blur, events and voxel grids per threshold, and
//! thinned grids per level, listed with SHA-256 checksums in
//! `manifest.txt` (`<hex>  <file>` lines, sorted by file name).

use std::path::{Path, PathBuf};

use evrobust_core::dvs::{simulate_events, synthesize_blur, DvsConfig, NoiseModel};
use evrobust_core::events::encode_voxel;
use evrobust_core::frames::{write_pgm, BitDepth, FrameSequence};
use evrobust_core::rng::{derive, Domain};
use evrobust_core::rps::{survival_map_from_alpha, thin};

use crate::error::{Error, Result};
use crate::io::{sha256_file, write_atomic};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub thetas: Vec<f64>,
    pub noise: NoiseModel,
    pub bins: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSummary {
    pub theta: f64,
    pub events: usize,
    pub nonzero_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// `(file name, sha256)` sorted by name.
    pub entries: Vec<(String, String)>,
    pub thetas: Vec<ThetaSummary>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(f, h)| format!("{h}  {f}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once("  ")
                    .map(|(h, f)| (f.to_string(), h.to_string()))
                    .ok_or_else(|| Error::Input(format!("malformed manifest line `{l}`")))
            })
            .collect()
    }
}

pub fn simulate_pipeline(seq: &FrameSequence, opts: &SimulateOptions, out: &Path) -> Result<Manifest> {
    if opts.thetas.is_empty() {
        return Err(Error::Input("at least one threshold is required".into()));
    }
    if let Some(l) = opts.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Input(format!("level {l} lies outside [0, 1]")));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files: Vec<PathBuf> = Vec::new();

    let blur = out.join("blur.pgm");
    write_pgm(&synthesize_blur(seq)?, &blur, BitDepth::Sixteen)?;
    files.push(blur);

    let sim_seed = derive(opts.seed, &[Domain::Simulate as u64]);
    let mut thetas = Vec::new();
    for (ti, &theta) in opts.thetas.iter().enumerate() {
        let stream = simulate_events(seq, &DvsConfig::new(theta, opts.noise)?, sim_seed)?;
        let evt = out.join(format!("events_theta_{theta}.evt"));
        write_atomic(&evt, stream.to_text().as_bytes())?;
        files.push(evt);

        let grid = encode_voxel(&stream, opts.bins)?;
        let vox = out.join(format!("voxel_theta_{theta}.vox"));
        write_atomic(&vox, grid.to_text().as_bytes())?;
        files.push(vox);
        thetas.push(ThetaSummary {
            theta,
            events: stream.len(),
            nonzero_cells: grid.nonzero_count(),
        });

        let field = derive(opts.seed, &[Domain::Sweep as u64, ti as u64]);
        let (b, h, w) = grid.shape();
        for &level in &opts.levels {
            let thinned = thin(&grid, &survival_map_from_alpha(level, b, h, w)?, field)?;
            let p = out.join(format!("thinned_theta_{theta}_alpha_{level}.vox"));
            write_atomic(&p, thinned.to_text().as_bytes())?;
            files.push(p);
        }
    }

    let mut entries = files
        .iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            Ok((name, sha256_file(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    let manifest = Manifest { entries, thetas };
    write_atomic(&out.join(MANIFEST), manifest.to_text().as_bytes())?;
    Ok(manifest)
}

/// Files whose current checksum differs from the manifest.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let p = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut bad = Vec::new();
    for (file, hash) in Manifest::parse(&text)? {
        let path = dir.join(&file);
        if !path.is_file() || sha256_file(&path)? != hash {
            bad.push(file);
        }
    }
    Ok(bad)
}
