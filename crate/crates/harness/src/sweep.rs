//! Degradation sweeps over a voxel grid.
//!
//! CSV columns, in order:
//!
//! | column           | content                                                   |
//! |------------------|-----------------------------------------------------------|
//! | `level`          | configured ratio                                          |
//! | `mode`           | `under_report` or `noise_inject`                          |
//! | `empirical`      | dropped fraction of nonzero cells, or injected/nonzero    |
//! | `events_before`  | `sum |cell|` of the clean grid                            |
//! | `events_after`   | `sum |cell|` of the degraded grid                         |
//! | `nonzero_before` | nonzero cells of the clean grid                           |
//! | `nonzero_after`  | nonzero cells of the degraded grid                        |
//! | `psnr`           | clean vs degraded event-frame proxy, dB (99 on a match)   |
//! | `ssim`           | same pair; empty when the sensor is below 11x11           |
//! | `feat_mean`      | smoke-run output mean; empty without weights              |
//! | `feat_var`       | smoke-run output variance                                 |
//! | `feat_max`       | smoke-run output maximum                                  |
//!
//! The event-frame proxy sums the bins per pixel and maps them to
//! `0.5 + v / (2 m)`, clamped to `[0, 1]`, where `m` is the largest clean
//! magnitude. Comment lines carry the seed and config hash.
//!
//! All levels share one random field: thinning at a higher level drops a
//! superset of the cells dropped at a lower one, and injection at a higher
//! level extends the lower level's draws. Empirical rates are therefore
//! monotone in the level, and results do not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use evrobust_core::dvs::{simulate_events, DvsConfig};
use evrobust_core::events::{encode_voxel, EventStream, VoxelGrid};
use evrobust_core::frames::GrayImage;
use evrobust_core::metrics::{psnr, ssim, ImageF, SSIM_WINDOW};
use evrobust_core::rng::{derive, Domain};
use evrobust_core::rps::{empirical_ur, noise_inject_counted, survival_map_from_alpha, thin};

use crate::config::{Mode, SweepConfig};
use crate::error::{Error, Result};
use crate::ingest::ingest_dataset;
use crate::io::write_atomic;
use crate::smoke::{feature_stats, FeatureStats, SmokeWeights};

pub const CSV_HEADER: &str =
    "level,mode,empirical,events_before,events_after,nonzero_before,nonzero_after,psnr,ssim,feat_mean,feat_var,feat_max";

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: f64,
    pub mode: Mode,
    pub empirical: f64,
    pub events_before: f64,
    pub events_after: f64,
    pub nonzero_before: usize,
    pub nonzero_after: usize,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub features: Option<FeatureStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<LevelRow>,
    pub seed: u64,
    pub config_hash: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed = {}\n# config_hash = {:016x}\n{CSV_HEADER}\n", self.seed, self.config_hash);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.level,
                r.mode,
                r.empirical,
                r.events_before,
                r.events_after,
                r.nonzero_before,
                r.nonzero_after,
                r.psnr,
                opt(r.ssim),
                opt(r.features.map(|f| f.mean)),
                opt(r.features.map(|f| f.variance)),
                opt(r.features.map(|f| f.max)),
            );
        }
        out
    }
}

/// The clean grid plus an intensity image for smoke runs.
#[derive(Debug, Clone)]
pub struct SweepInput {
    pub grid: VoxelGrid,
    pub image: Option<GrayImage>,
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

fn grid_from_stream(stream: &EventStream, bins: usize) -> Result<VoxelGrid> {
    Ok(encode_voxel(stream, bins)?)
}

pub fn load_input(cfg: &SweepConfig) -> Result<SweepInput> {
    let path = &cfg.input;
    if path.is_file() {
        return match extension(path).as_deref() {
            Some("vox") => {
                let grid = VoxelGrid::read(path)?;
                if grid.bins() != cfg.bins {
                    return Err(Error::Input(format!(
                        "{} has {} bins, config asks for {}",
                        path.display(),
                        grid.bins(),
                        cfg.bins
                    )));
                }
                Ok(SweepInput { grid, image: None })
            }
            Some("evt") => Ok(SweepInput {
                grid: grid_from_stream(&EventStream::read(path)?, cfg.bins)?,
                image: None,
            }),
            _ => Err(Error::Input(format!("{}: expected a .vox or .evt file", path.display()))),
        };
    }
    let ds = ingest_dataset(path)?;
    let image = match ds.first_blur()? {
        Some(b) => Some(b),
        None => ds.frames.as_ref().map(evrobust_core::dvs::synthesize_blur).transpose()?,
    };
    let grid = if let Some(events) = &ds.events {
        grid_from_stream(events, cfg.bins)?
    } else if let Some(seq) = &ds.frames {
        let dvs = DvsConfig::new(cfg.theta, cfg.noise)?;
        let stream = simulate_events(seq, &dvs, derive(cfg.seed, &[Domain::Simulate as u64]))?;
        grid_from_stream(&stream, cfg.bins)?
    } else {
        return Err(Error::Input(format!("{} holds neither events nor frames", path.display())));
    };
    Ok(SweepInput { grid, image })
}

/// Per-pixel bin sum mapped into `[0, 1]` with scale `m`.
pub fn event_frame(grid: &VoxelGrid, scale: f64) -> Result<ImageF> {
    let (bins, h, w) = grid.shape();
    let data = (0..h * w)
        .map(|i| {
            let v: f64 = (0..bins).map(|b| grid.bin(b)[i]).sum();
            (0.5 + v / (2.0 * scale)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(ImageF::gray(h, w, data, 1.0)?)
}

fn frame_scale(grid: &VoxelGrid) -> f64 {
    let (bins, h, w) = grid.shape();
    let m = (0..h * w)
        .map(|i| (0..bins).map(|b| grid.bin(b)[i]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn nonzero(grid: &VoxelGrid) -> usize {
    grid.nonzero_count()
}

fn evaluate_level(
    cfg: &SweepConfig,
    input: &SweepInput,
    clean_frame: &ImageF,
    scale: f64,
    weights: Option<&SmokeWeights>,
    level: f64,
) -> Result<LevelRow> {
    let grid = &input.grid;
    let field = derive(cfg.seed, &[Domain::Sweep as u64]);
    let (degraded, empirical) = match cfg.mode {
        Mode::UnderReport => {
            let (b, h, w) = grid.shape();
            let maps = survival_map_from_alpha(level, b, h, w)?;
            let thinned = thin(grid, &maps, field)?;
            let ur = empirical_ur(grid, &thinned)?;
            (thinned, ur)
        }
        Mode::NoiseInject => {
            let (noisy, count) = noise_inject_counted(grid, level, field)?;
            let nz = nonzero(grid);
            (noisy, if nz == 0 { 0.0 } else { count as f64 / nz as f64 })
        }
    };
    let frame = event_frame(&degraded, scale)?;
    let (h, w) = (grid.height(), grid.width());
    let features = match weights {
        Some(sw) => {
            let image = match &input.image {
                Some(img) => img.clone(),
                None => {
                    let f = event_frame(grid, scale)?;
                    GrayImage::new(h, w, f.data().to_vec())?
                }
            };
            Some(feature_stats(sw, &degraded, &image, cfg.crop)?)
        }
        None => None,
    };
    Ok(LevelRow {
        level,
        mode: cfg.mode,
        empirical,
        events_before: grid.abs_sum(),
        events_after: degraded.abs_sum(),
        nonzero_before: nonzero(grid),
        nonzero_after: nonzero(&degraded),
        psnr: psnr(clean_frame, &frame)?.db,
        ssim: if h.min(w) >= SSIM_WINDOW {
            Some(ssim(clean_frame, &frame)?)
        } else {
            None
        },
        features,
    })
}

/// Evaluates every level in parallel; row order follows the config.
pub fn evaluate(cfg: &SweepConfig, input: &SweepInput, weights: Option<&SmokeWeights>) -> Result<SweepResult> {
    cfg.validate().map_err(Error::Input)?;
    let scale = frame_scale(&input.grid);
    let clean = event_frame(&input.grid, scale)?;
    let rows = cfg
        .levels
        .par_iter()
        .map(|&level| evaluate_level(cfg, input, &clean, scale, weights, level))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    })
}

pub fn meta_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Loads, evaluates on a pool of `cfg.workers` threads, and writes the CSV
/// plus a `<output>.meta` sidecar holding the run timestamp.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let input = load_input(cfg)?;
    let weights = cfg.weights.as_deref().map(SmokeWeights::read).transpose()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        pool = pool.num_threads(cfg.workers);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    let result = pool.install(|| evaluate(cfg, &input, weights.as_ref()))?;
    write_atomic(&cfg.output, result.to_csv().as_bytes())?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = format!(
        "seed = {}\nconfig_hash = {:016x}\ntimestamp = {stamp}\nworkers = {}\n",
        result.seed,
        result.config_hash,
        pool.current_num_threads()
    );
    write_atomic(&meta_path(&cfg.output), meta.as_bytes())?;
    Ok(result)
}
