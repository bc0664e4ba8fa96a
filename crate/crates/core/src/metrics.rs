//! PSNR, SSIM and robustness curves.
//!
//! PSNR uses a single MSE over all pixels and channels. SSIM follows the
//! usual 11x11 Gaussian window (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`,
//! evaluated at every position where the window fits entirely inside the
//! image and averaged over positions and channels.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::GrayImage;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `height x width x channels` image, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    peak: f64,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>, peak: f64) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "empty image {height}x{width}x{channels}"
            )));
        }
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::InvalidArgument(format!("peak must be > 0, got {peak}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=peak).contains(v)) {
            return Err(Error::Validation {
                index: i,
                message: format!("sample {} outside [0, {peak}]", data[i]),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            peak,
        })
    }

    pub fn gray(height: usize, width: usize, data: Vec<f64>, peak: f64) -> Result<Self> {
        Self::new(height, width, 1, data, peak)
    }

    /// Reads an image file at peak 1, keeping RGB channels so PSNR and
    /// SSIM are computed jointly over them.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (h, w, c, data) = crate::frames::read_channels(path)?;
        Self::new(h, w, c, data, 1.0)
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        Self::gray(img.height(), img.width(), img.data().to_vec(), 1.0)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn check_pair(&self, other: &ImageF) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!("{:?}", self.dims()), format!("{:?}", other.dims())));
        }
        if self.peak != other.peak {
            return Err(Error::InvalidArgument(format!(
                "peak mismatch: {} vs {}",
                self.peak, other.peak
            )));
        }
        Ok(())
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    pub exact_match: bool,
}

pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.check_pair(b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len() as f64)
}

/// `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP_DB`] for identical inputs.
pub fn psnr(a: &ImageF, b: &ImageF) -> Result<Psnr> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            exact_match: true,
        });
    }
    Ok(Psnr {
        db: 10.0 * (a.peak * a.peak / m).log10(),
        exact_match: false,
    })
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filter of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> f64 {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect() };
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, &taps);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, &taps);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

pub fn ssim(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.check_pair(b)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height, a.width
        )));
    }
    let sum: f64 = (0..a.channels)
        .map(|c| ssim_plane(&a.channel(c), &b.channel(c), a.height, a.width, a.peak))
        .sum();
    Ok(sum / a.channels as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub level: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    label: String,
    rows: Vec<CurveRow>,
}

/// Levels strictly increasing, SSIM within `[-1, 1]`.
pub fn build_curve(label: impl Into<String>, rows: Vec<CurveRow>) -> Result<RobustnessCurve> {
    if let Some(i) = rows.windows(2).position(|w| w[1].level <= w[0].level) {
        return Err(Error::Validation {
            index: i + 1,
            message: format!(
                "levels must be strictly increasing: {} after {}",
                rows[i + 1].level,
                rows[i].level
            ),
        });
    }
    if let Some(i) = rows.iter().position(|r| !(-1.0..=1.0).contains(&r.ssim) || !r.psnr.is_finite()) {
        return Err(Error::Validation {
            index: i,
            message: format!("invalid row psnr = {}, ssim = {}", rows[i].psnr, rows[i].ssim),
        });
    }
    Ok(RobustnessCurve {
        label: label.into(),
        rows,
    })
}

impl RobustnessCurve {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> &[CurveRow] {
        &self.rows
    }

    pub fn at(&self, level: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| levels_match(r.level, level))
    }

    pub fn levels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.level).collect()
    }

    pub fn psnr_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].psnr <= w[0].psnr)
    }

    pub fn ssim_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ssim <= w[0].ssim)
    }

    /// `level,psnr,ssim` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,psnr,ssim\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.level, r.psnr, r.ssim));
        }
        out
    }

    /// Reads any CSV with `level`, `psnr` and `ssim` columns; other columns
    /// and `#` comment lines are ignored. Rows with an empty psnr or ssim
    /// field are skipped.
    pub fn from_csv(label: impl Into<String>, reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let err = |line: usize, message: String| Error::Parse {
            context: "curve CSV".into(),
            line,
            message,
        };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| err(1, format!("missing `{name}` column")))
        };
        let (li, pi, si) = (col("level")?, col("psnr")?, col("ssim")?);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |i: usize| rec.get(i).unwrap_or("");
            if field(pi).is_empty() || field(si).is_empty() {
                continue;
            }
            let num = |i: usize| {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("invalid number `{}`", field(i))))
            };
            rows.push(CurveRow {
                level: num(li)?,
                psnr: num(pi)?,
                ssim: num(si)?,
            });
        }
        build_curve(label, rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("curve")
            .to_string();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(label, f)
    }
}

const LEVEL_EPS: f64 = 1e-9;

fn levels_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_EPS
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDelta {
    pub level: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveComparison {
    /// `first - second` per level.
    pub deltas: Vec<LevelDelta>,
    pub first_psnr_non_increasing: bool,
    pub second_psnr_non_increasing: bool,
}

impl CurveComparison {
    pub fn max_abs_delta(&self) -> f64 {
        self.deltas
            .iter()
            .map(|d| d.psnr.abs().max(d.ssim.abs()))
            .fold(0.0, f64::max)
    }
}

pub fn compare_curves(first: &RobustnessCurve, second: &RobustnessCurve) -> Result<CurveComparison> {
    let same_grid = first.rows.len() == second.rows.len()
        && first
            .rows
            .iter()
            .zip(&second.rows)
            .all(|(a, b)| levels_match(a.level, b.level));
    if !same_grid {
        return Err(Error::InvalidArgument(format!(
            "level grids differ: {:?} vs {:?}",
            first.levels(),
            second.levels()
        )));
    }
    let deltas = first
        .rows
        .iter()
        .zip(&second.rows)
        .map(|(a, b)| LevelDelta {
            level: a.level,
            psnr: a.psnr - b.psnr,
            ssim: a.ssim - b.ssim,
        })
        .collect();
    Ok(CurveComparison {
        deltas,
        first_psnr_non_increasing: first.psnr_non_increasing(),
        second_psnr_non_increasing: second.psnr_non_increasing(),
    })
}
