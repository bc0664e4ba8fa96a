//! Grayscale frames and frame-sequence directories.
//!
//! A sequence directory holds `000000.pgm`, `000001.pgm`, ... plus
//! `timestamps.txt` with one microsecond value per line. Colour PPM frames
//! are converted with `0.299 R + 0.587 G + 0.114 B`.

use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};

/// Single-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} pixels", height * width),
                format!("{} pixels", data.len()),
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &GrayImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &GrayImage) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Reads a PGM or PPM file, normalising samples to `[0, 1]`.
fn decode(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => luminance(b.into_raw().into_iter().map(|v| f64::from(v) / 255.0)),
        DynamicImage::ImageRgb16(b) => luminance(b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0)),
        other => luminance(other.to_rgb32f().into_raw().into_iter().map(f64::from)),
    };
    GrayImage::new(h, w, data)
}

/// Decodes an image keeping its colour channels: `(height, width,
/// channels, interleaved samples in [0, 1])`, with 1 or 3 channels.
pub fn read_channels(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()),
        other => (3, other.to_rgb32f().into_raw().into_iter().map(|v| f64::from(v).clamp(0.0, 1.0)).collect()),
    };
    Ok((h, w, channels, data))
}

fn luminance(rgb: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = rgb.collect();
    v.chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

/// Writes a binary PGM, clamping to `[0, 1]` and rounding to the bit depth.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let maxval: u32 = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let mut buf = format!("P5\n{} {}\n{maxval}\n", img.width, img.height).into_bytes();
    for v in &img.data {
        let q = (v.clamp(0.0, 1.0) * f64::from(maxval)).round() as u16;
        match depth {
            BitDepth::Eight => buf.push(q as u8),
            BitDepth::Sixteen => buf.extend_from_slice(&q.to_be_bytes()),
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Frames with strictly increasing microsecond timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<GrayImage>,
    timestamps: Vec<u64>,
}

impl FrameSequence {
    pub fn new(frames: Vec<GrayImage>, timestamps: Vec<u64>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("frame sequence is empty".into()));
        }
        if frames.len() != timestamps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frames but {} timestamps",
                frames.len(),
                timestamps.len()
            )));
        }
        let dims = frames[0].dims();
        if let Some(i) = frames.iter().position(|f| f.dims() != dims) {
            return Err(Error::shape(
                format!("{}x{}", dims.0, dims.1),
                format!("frame {i} {}x{}", frames[i].height, frames[i].width),
            ));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "timestamps must be strictly increasing: {} then {} at frame {}",
                timestamps[i],
                timestamps[i + 1],
                i + 1
            )));
        }
        Ok(Self { frames, timestamps })
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

/// Frame files of a sequence directory, sorted by name.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm"))
            .unwrap_or(false);
        if is_frame && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_timestamps(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<u64>().map_err(|_| Error::Parse {
                context: path.display().to_string(),
                line: i + 1,
                message: format!("invalid timestamp `{}`", l.trim()),
            })
        })
        .collect()
}

pub fn read_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let ts_path = dir.join(TIMESTAMPS_FILE);
    if !ts_path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "{} is missing {TIMESTAMPS_FILE}",
            dir.display()
        )));
    }
    let timestamps = read_timestamps(&ts_path)?;
    let frames = list_frame_files(dir)?
        .iter()
        .map(read_image)
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, timestamps)
}

pub fn write_sequence(seq: &FrameSequence, dir: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in seq.frames.iter().enumerate() {
        write_pgm(f, dir.join(format!("{i:06}.pgm")), depth)?;
    }
    let ts: String = seq.timestamps.iter().map(|t| format!("{t}\n")).collect();
    let p = dir.join(TIMESTAMPS_FILE);
    fs::write(&p, ts).map_err(|e| Error::io(&p, e))
}
