//! Stochastic thinning of voxel grids to emulate threshold-driven
//! under-reporting.
//!
//! A [`SurvivalMap`] holds the per-cell retention probability. [`thin`]
//! multiplies each cell by an independent Bernoulli draw; the draw is made
//! for every cell, zero or not, so the mask never depends on the content.
//! Bin `b` draws from its own stream `(seed, b)` in row-major order.

use rand::Rng;
use rayon::prelude::*;

use crate::dvs::{self, NoiseModel};
use crate::error::{Error, Result};
use crate::events::{self, EventStream, VoxelGrid};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalMap {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SurvivalMap {
    pub fn new(bins: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if bins == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "survival map dimensions must be positive, got {bins}x{height}x{width}"
            )));
        }
        if data.len() != bins * height * width {
            return Err(Error::shape(
                format!("{} values", bins * height * width),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation {
                index: i,
                message: format!("survival probability {} outside [0, 1]", data[i]),
            });
        }
        Ok(Self {
            bins,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bins, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn bin(&self, bin: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[bin * plane..(bin + 1) * plane]
    }

    /// Spatial mean of each bin.
    pub fn bin_means(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|b| self.bin(b).iter().sum::<f64>() / (self.height * self.width) as f64)
            .collect()
    }

    pub fn to_grid(&self) -> VoxelGrid {
        VoxelGrid::from_data(self.bins, self.height, self.width, self.data.clone())
            .expect("survival map is a valid grid")
    }

    pub fn from_grid(grid: &VoxelGrid) -> Result<Self> {
        let (b, h, w) = grid.shape();
        Self::new(b, h, w, grid.data().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    alpha_min: f64,
    alpha_max: f64,
}

impl PerturbConfig {
    pub fn new(alpha_min: f64, alpha_max: f64) -> Result<Self> {
        if !(0.0 <= alpha_min && alpha_min <= alpha_max && alpha_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= alpha_min <= alpha_max <= 1, got [{alpha_min}, {alpha_max}]"
            )));
        }
        Ok(Self {
            alpha_min,
            alpha_max,
        })
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }
}

impl Default for PerturbConfig {
    /// The training range `U(0, 0.2)`.
    fn default() -> Self {
        Self {
            alpha_min: 0.0,
            alpha_max: 0.2,
        }
    }
}

/// One draw of `alpha ~ U(alpha_min, alpha_max)`; a degenerate interval
/// returns its endpoint exactly.
pub fn sample_alpha(cfg: &PerturbConfig, seed: u64) -> f64 {
    AlphaSampler::new(*cfg, seed).sample(0)
}

/// Per-iteration alpha draws; iteration `i` is addressable directly.
#[derive(Debug, Clone)]
pub struct AlphaSampler {
    cfg: PerturbConfig,
    seed: u64,
    next: u64,
}

impl AlphaSampler {
    pub fn new(cfg: PerturbConfig, seed: u64) -> Self {
        Self { cfg, seed, next: 0 }
    }

    pub fn sample(&self, iteration: u64) -> f64 {
        let u: f64 = rng::stream(self.seed, Domain::Alpha, iteration).random();
        self.cfg.alpha_min + (self.cfg.alpha_max - self.cfg.alpha_min) * u
    }
}

impl Iterator for AlphaSampler {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let a = self.sample(self.next);
        self.next += 1;
        Some(a)
    }
}

/// Constant map `pi = 1 - alpha`.
pub fn survival_map_from_alpha(alpha: f64, bins: usize, height: usize, width: usize) -> Result<SurvivalMap> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    SurvivalMap::new(bins, height, width, vec![1.0 - alpha; bins * height * width])
}

/// How a signal-dependent survival probability is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalReading {
    /// `P(|S + N| >= theta)`.
    Triggering,
    /// `P(|S + N| >= theta | |S + N| >= base_theta)`: the chance that an
    /// event recorded at `base_theta` would still fire at `theta`.
    ConditionalOnBase { base_theta: f64 },
}

/// Per-cell triggering probability given the local signal.
///
/// All cells share the same noise samples, so the map is monotone in |S|
/// wherever the noise is symmetric up to sampling error.
pub fn survival_map_from_threshold(
    signal: &VoxelGrid,
    noise: &NoiseModel,
    theta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SurvivalMap> {
    survival_map_with_reading(signal, noise, theta, SurvivalReading::Triggering, n_samples, seed)
}

pub fn survival_map_with_reading(
    signal: &VoxelGrid,
    noise: &NoiseModel,
    theta: f64,
    reading: SurvivalReading,
    n_samples: usize,
    seed: u64,
) -> Result<SurvivalMap> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be > 0, got {theta}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if let SurvivalReading::ConditionalOnBase { base_theta } = reading {
        if !(base_theta > 0.0 && base_theta <= theta) {
            return Err(Error::InvalidArgument(format!(
                "base threshold must lie in (0, theta], got {base_theta}"
            )));
        }
    }
    let samples = dvs::noise_samples(noise, n_samples, seed);
    let (b, h, w) = signal.shape();
    let data = signal
        .data()
        .par_iter()
        .map(|&s| {
            let fires = |t: f64| samples.iter().filter(|n| (s + *n).abs() >= t).count();
            match reading {
                SurvivalReading::Triggering => fires(theta) as f64 / n_samples as f64,
                SurvivalReading::ConditionalOnBase { base_theta } => match fires(base_theta) {
                    0 => 0.0,
                    base => fires(theta) as f64 / base as f64,
                },
            }
        })
        .collect();
    SurvivalMap::new(b, h, w, data)
}

fn check_map_shape(grid: &VoxelGrid, maps: &SurvivalMap) -> Result<()> {
    if grid.shape() != maps.shape() {
        return Err(Error::shape(
            format!("survival map {:?}", grid.shape()),
            format!("{:?}", maps.shape()),
        ));
    }
    Ok(())
}

/// Cellwise Bernoulli thinning: `out = grid * rho`, `rho ~ Bernoulli(pi)`.
pub fn thin(grid: &VoxelGrid, maps: &SurvivalMap, seed: u64) -> Result<VoxelGrid> {
    check_map_shape(grid, maps)?;
    let plane = grid.plane_len();
    let mut out = grid.data().to_vec();
    out.par_chunks_mut(plane).enumerate().for_each(|(b, cells)| {
        let mut rng = rng::stream(seed, Domain::Thin, b as u64);
        for (v, &p) in cells.iter_mut().zip(maps.bin(b)) {
            let u: f64 = rng.random();
            if u >= p {
                *v = 0.0;
            }
        }
    });
    grid.map_data(out)
}

/// The Bernoulli masks [`thin`] would apply, as 0/1 values.
pub fn thinning_mask(maps: &SurvivalMap, seed: u64) -> Vec<u8> {
    let (bins, h, w) = maps.shape();
    let mut out = vec![0u8; bins * h * w];
    out.par_chunks_mut(h * w).enumerate().for_each(|(b, cells)| {
        let mut rng = rng::stream(seed, Domain::Thin, b as u64);
        for (m, &p) in cells.iter_mut().zip(maps.bin(b)) {
            let u: f64 = rng.random();
            *m = u8::from(u < p);
        }
    });
    out
}

/// Event-level alternative to [`thin`]: each event survives with the
/// probability of the cell it would be binned into.
pub fn thin_events(stream: &EventStream, maps: &SurvivalMap, seed: u64) -> Result<EventStream> {
    let (bins, h, w) = maps.shape();
    if (h, w) != (stream.height() as usize, stream.width() as usize) {
        return Err(Error::shape(
            format!("{h}x{w} sensor"),
            format!("{}x{}", stream.height(), stream.width()),
        ));
    }
    if stream.span() == 0 {
        return Err(Error::DegenerateSpan {
            t_start: stream.t_start(),
            t_end: stream.t_end(),
        });
    }
    let mut rng = rng::stream(seed, Domain::ThinEvents, 0);
    let (t0, t1) = (stream.t_start(), stream.t_end());
    Ok(stream.filter(|_, e| {
        let b = events::bin_index(e.t, t0, t1, bins);
        let p = maps.data()[(b * h + e.y as usize) * w + e.x as usize];
        rng.random::<f64>() < p
    }))
}

/// Fraction of originally nonzero cells that are zero after thinning;
/// 0 when the original has no nonzero cells.
pub fn empirical_ur(original: &VoxelGrid, thinned: &VoxelGrid) -> Result<f64> {
    original.same_shape(thinned)?;
    let (mut nonzero, mut dropped) = (0usize, 0usize);
    for (a, b) in original.data().iter().zip(thinned.data()) {
        if *a != 0.0 {
            nonzero += 1;
            if *b == 0.0 {
                dropped += 1;
            }
        }
    }
    Ok(if nonzero == 0 {
        0.0
    } else {
        dropped as f64 / nonzero as f64
    })
}

/// Three-sigma binomial tolerance for an empirical rate over `n` trials.
pub fn binomial_tolerance(p: f64, n: usize, sigmas: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    sigmas * (p * (1.0 - p) / n as f64).sqrt()
}

/// Adds `round(ratio * nonzero)` spurious unit counts of random sign to
/// cells chosen uniformly with replacement.
pub fn noise_inject(grid: &VoxelGrid, ratio: f64, seed: u64) -> Result<VoxelGrid> {
    Ok(noise_inject_counted(grid, ratio, seed)?.0)
}

/// As [`noise_inject`], also returning the number of injected counts.
pub fn noise_inject_counted(grid: &VoxelGrid, ratio: f64, seed: u64) -> Result<(VoxelGrid, usize)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("noise ratio must lie in [0, 1], got {ratio}")));
    }
    let count = (ratio * grid.nonzero_count() as f64).round() as usize;
    let mut data = grid.data().to_vec();
    let mut rng = rng::stream(seed, Domain::NoiseInject, 0);
    for _ in 0..count {
        let cell = rng.random_range(0..data.len());
        data[cell] += if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    Ok((grid.map_data(data)?, count))
}
