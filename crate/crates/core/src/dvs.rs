//! Log-intensity triggering model of a dynamic vision sensor.
//!
//! A pixel fires when its log-intensity change `S + N` reaches the contrast
//! threshold `theta`. The noise `N` mixes a (by default centred) Poisson
//! photon term with Gaussian circuit noise; `lambda` is expressed per frame
//! interval. The estimators below are plain Monte-Carlo averages over a
//! chunked, counter-based sample sequence, so they do not depend on the
//! number of rayon workers, and the same seed gives common random numbers
//! across thresholds and signal levels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity};
use crate::frames::{FrameSequence, GrayImage};
use crate::rng::{self, Domain};

/// Default offset added before taking logarithms.
pub const DEFAULT_LOG_FLOOR: f64 = 1.0 / 255.0;

/// Samples per Monte-Carlo chunk; each chunk owns one RNG stream.
pub const MC_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    lambda: f64,
    sigma_n: f64,
    centered: bool,
}

impl NoiseModel {
    pub fn new(lambda: f64, sigma_n: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_n must be >= 0, got {sigma_n}")));
        }
        Ok(Self {
            lambda,
            sigma_n,
            centered: true,
        })
    }

    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            sigma_n: 0.0,
            centered: true,
        }
    }

    pub fn gaussian(sigma_n: f64) -> Result<Self> {
        Self::new(0.0, sigma_n)
    }

    /// Uses the raw `Poisson(lambda)` count instead of `Poisson(lambda) - lambda`.
    pub fn uncentered(mut self) -> Self {
        self.centered = false;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn is_silent(&self) -> bool {
        self.lambda == 0.0 && self.sigma_n == 0.0
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler {
            poisson: (self.lambda > 0.0).then(|| Poisson::new(self.lambda).expect("lambda > 0")),
            offset: if self.centered { self.lambda } else { 0.0 },
            sigma: self.sigma_n,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Draws `N = N_p (- lambda) + N_g`.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    poisson: Option<Poisson<f64>>,
    offset: f64,
    sigma: f64,
}

impl NoiseSampler {
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        let mut n = 0.0;
        if let Some(p) = &self.poisson {
            n += p.sample(rng) - self.offset;
        }
        if self.sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            n += self.sigma * z;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvsConfig {
    pub theta: f64,
    pub noise: NoiseModel,
    pub log_floor: f64,
}

impl DvsConfig {
    pub fn new(theta: f64, noise: NoiseModel) -> Result<Self> {
        Self::with_log_floor(theta, noise, DEFAULT_LOG_FLOOR)
    }

    pub fn with_log_floor(theta: f64, noise: NoiseModel, log_floor: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be > 0, got {theta}")));
        }
        if !(log_floor > 0.0 && log_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!("log_floor must be > 0, got {log_floor}")));
        }
        Ok(Self {
            theta,
            noise,
            log_floor,
        })
    }
}

/// `log(frame_t + floor) - log(frame_prev + floor)` per pixel, row-major.
pub fn log_increment(frame_t: &GrayImage, frame_prev: &GrayImage, log_floor: f64) -> Result<Vec<f64>> {
    frame_t.same_shape(frame_prev)?;
    Ok(frame_t
        .data()
        .iter()
        .zip(frame_prev.data())
        .map(|(a, b)| (a + log_floor).ln() - (b + log_floor).ln())
        .collect())
}

/// Reference-crossing event generation.
///
/// Every pixel latches a reference log-intensity from the first frame. At
/// each later frame the noisy residual `log I + N - ref` is compared with
/// `theta`; `floor(|residual| / theta)` events of the residual's sign are
/// emitted at the frame timestamp and the reference moves by that many
/// thresholds. Noise for frame `k` comes from stream `k`, so the output is
/// seed-independent when the noise model is silent.
pub fn simulate_events(seq: &FrameSequence, cfg: &DvsConfig, seed: u64) -> Result<EventStream> {
    if seq.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "event simulation needs at least 2 frames, got {}",
            seq.len()
        )));
    }
    let (h, w) = seq.dims();
    let log = |f: &GrayImage| -> Vec<f64> { f.data().iter().map(|v| (v + cfg.log_floor).ln()).collect() };
    let mut reference = log(&seq.frames()[0]);
    let sampler = cfg.noise.sampler();
    let silent = cfg.noise.is_silent();
    let mut events = Vec::new();

    for (k, (frame, &t)) in seq.frames().iter().zip(seq.timestamps()).enumerate().skip(1) {
        let current = log(frame);
        let mut rng = rng::stream(seed, Domain::Simulate, k as u64);
        for (i, (cur, r)) in current.iter().zip(reference.iter_mut()).enumerate() {
            let noise = if silent { 0.0 } else { sampler.draw(&mut rng) };
            let residual = cur + noise - *r;
            let crossings = (residual.abs() / cfg.theta).floor();
            if crossings < 1.0 {
                continue;
            }
            let polarity = Polarity::from_sign(residual).expect("nonzero residual");
            *r += polarity.value() * crossings * cfg.theta;
            let (y, x) = ((i / w) as u32, (i % w) as u32);
            events.extend((0..crossings as usize).map(|_| Event::new(t, x, y, polarity)));
        }
    }
    let ts = seq.timestamps();
    EventStream::new(w as u32, h as u32, ts[0], ts[ts.len() - 1], events)
}

/// Elementwise mean of the frames.
pub fn synthesize_blur(seq: &FrameSequence) -> Result<GrayImage> {
    let (h, w) = seq.dims();
    let mut acc = vec![0.0; h * w];
    for f in seq.frames() {
        for (a, v) in acc.iter_mut().zip(f.data()) {
            *a += v;
        }
    }
    let n = seq.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    GrayImage::new(h, w, acc)
}

/// A Monte-Carlo proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl Estimate {
    pub fn from_hits(hits: u64, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }

    pub fn complement(self) -> Self {
        Self {
            value: 1.0 - self.value,
            ..self
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    rng::stream(seed, Domain::MonteCarlo, chunk as u64)
}

/// Counts noise samples for which `hit` holds. Sample `i` is fixed by
/// `(seed, i)` alone.
pub fn count_noise_hits(
    noise: &NoiseModel,
    n_samples: usize,
    seed: u64,
    hit: impl Fn(f64) -> bool + Sync,
) -> u64 {
    let sampler = noise.sampler();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut rng = chunk_rng(seed, c);
            (0..len).filter(|_| hit(sampler.draw(&mut rng))).count() as u64
        })
        .sum()
}

/// Draws the first `n_samples` noise values of the estimator sequence.
pub fn noise_samples(noise: &NoiseModel, n_samples: usize, seed: u64) -> Vec<f64> {
    let sampler = noise.sampler();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut rng = chunk_rng(seed, c);
            let s = sampler.clone();
            (0..len).map(move |_| s.draw(&mut rng))
        })
        .collect()
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    Ok(())
}

/// `P(|N| >= theta)`.
pub fn fpr(theta: f64, noise: &NoiseModel, n_samples: usize, seed: u64) -> Result<Estimate> {
    tpr(theta, 0.0, noise, n_samples, seed)
}

/// `P(|S + N| >= theta | S)`.
pub fn tpr(theta: f64, signal: f64, noise: &NoiseModel, n_samples: usize, seed: u64) -> Result<Estimate> {
    check_samples(n_samples)?;
    let hits = count_noise_hits(noise, n_samples, seed, |n| (signal + n).abs() >= theta);
    Ok(Estimate::from_hits(hits, n_samples))
}

/// `1 - TPR(theta | S)`.
pub fn ur_given_s(theta: f64, signal: f64, noise: &NoiseModel, n_samples: usize, seed: u64) -> Result<Estimate> {
    Ok(tpr(theta, signal, noise, n_samples, seed)?.complement())
}

/// Mean of `UR(theta | S)` over the supplied signal values. Signal `i` uses
/// its own derived seed, so the per-signal estimates are independent and
/// the reported error is `sqrt(sum se_i^2) / k`.
pub fn ur_expected(
    theta: f64,
    signals: &[f64],
    noise: &NoiseModel,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if signals.is_empty() {
        return Err(Error::InvalidArgument("signal sample set is empty".into()));
    }
    let per = signals
        .iter()
        .enumerate()
        .map(|(i, &s)| ur_given_s(theta, s, noise, n_samples, rng::derive(seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let k = per.len() as f64;
    let value = per.iter().map(|e| e.value).sum::<f64>() / k;
    let std_error = per.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt() / k;
    Ok(Estimate {
        value,
        std_error,
        n_samples: n_samples * per.len(),
    })
}
