//! Event streams and voxel grids.
//!
//! Text formats:
//!
//! ```text
//! EVT1 <width> <height> <t_start> <t_end>
//! <t> <x> <y> <p>          one event per line, p in {1, -1}, t in microseconds
//!
//! VOX1 <T> <H> <W>
//! <values>                 T*H*W decimals in (bin, y, x) row-major order
//! ```

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Temporal bin count used when none is configured.
pub const DEFAULT_BINS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Neg,
    Pos,
}

impl Polarity {
    pub fn from_sign(sign: f64) -> Option<Self> {
        if sign > 0.0 {
            Some(Polarity::Pos)
        } else if sign < 0.0 {
            Some(Polarity::Neg)
        } else {
            None
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Pos => 1,
            Polarity::Neg => -1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.sign())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u32, y: u32, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        (self.t, self.y, self.x, self.polarity).cmp(&(other.t, other.y, other.x, other.polarity))
    }
}

/// A sensor-bound, canonically ordered event sequence.
///
/// Events are sorted by `(t, y, x, polarity)`; every timestamp lies in
/// `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u32,
    height: u32,
    t_start: u64,
    t_end: u64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        width: u32,
        height: u32,
        t_start: u64,
        t_end: u64,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        if t_end < t_start {
            return Err(Error::DegenerateSpan { t_start, t_end });
        }
        for (index, e) in events.iter().enumerate() {
            validate_event(e, width, height, t_start, t_end).map_err(|message| {
                Error::Validation { index, message }
            })?;
        }
        events.sort_by(Event::canonical_cmp);
        Ok(Self {
            width,
            height,
            t_start,
            t_end,
            events,
        })
    }

    pub fn empty(width: u32, height: u32, t_start: u64, t_end: u64) -> Result<Self> {
        Self::new(width, height, t_start, t_end, Vec::new())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn t_start(&self) -> u64 {
        self.t_start
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    /// `t_end - t_start` in microseconds.
    pub fn span(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Keeps the events for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Event) -> bool) -> Self {
        let events = self
            .events
            .iter()
            .enumerate()
            .filter(|(i, e)| keep(*i, e))
            .map(|(_, e)| *e)
            .collect();
        Self {
            events,
            ..self.clone()
        }
    }

    /// Canonical EVT1 text.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 + self.events.len() * 16);
        let _ = writeln!(
            out,
            "EVT1 {} {} {} {}",
            self.width, self.height, self.t_start, self.t_end
        );
        for e in &self.events {
            let _ = writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.polarity.sign());
        }
        out
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: "event file".into(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
                None => return Err(parse_err(1, "missing EVT1 header".into())),
            }
        };
        let fields: Vec<&str> = header.1.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "EVT1" {
            return Err(parse_err(
                header.0,
                format!("expected `EVT1 <width> <height> <t_start> <t_end>`, got `{}`", header.1),
            ));
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(header.0, format!("invalid {what} `{s}`")))
        };
        let width = u32::try_from(num(fields[1], "width")?)
            .map_err(|_| parse_err(header.0, "width too large".into()))?;
        let height = u32::try_from(num(fields[2], "height")?)
            .map_err(|_| parse_err(header.0, "height too large".into()))?;
        let t_start = num(fields[3], "t_start")?;
        let t_end = num(fields[4], "t_end")?;
        if t_end < t_start {
            return Err(Error::DegenerateSpan { t_start, t_end });
        }

        let mut events = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let f: Vec<&str> = trimmed.split_whitespace().collect();
            if f.len() != 4 {
                return Err(parse_err(lineno, format!("expected `t x y p`, got `{trimmed}`")));
            }
            let t = f[0]
                .parse::<u64>()
                .map_err(|_| parse_err(lineno, format!("invalid timestamp `{}`", f[0])))?;
            let x = f[1]
                .parse::<u32>()
                .map_err(|_| parse_err(lineno, format!("invalid x `{}`", f[1])))?;
            let y = f[2]
                .parse::<u32>()
                .map_err(|_| parse_err(lineno, format!("invalid y `{}`", f[2])))?;
            let polarity = match f[3] {
                "1" | "+1" => Polarity::Pos,
                "-1" => Polarity::Neg,
                other => {
                    return Err(parse_err(lineno, format!("polarity must be 1 or -1, got `{other}`")))
                }
            };
            let event = Event::new(t, x, y, polarity);
            validate_event(&event, width, height, t_start, t_end).map_err(|message| {
                Error::Validation {
                    index: events.len(),
                    message: format!("line {lineno} `{trimmed}`: {message}"),
                }
            })?;
            events.push(event);
        }
        Self::new(width, height, t_start, t_end, events)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn validate_event(e: &Event, width: u32, height: u32, t_start: u64, t_end: u64) -> Result<(), String> {
    if e.x >= width {
        return Err(format!("x = {} out of bounds for sensor width {width}", e.x));
    }
    if e.y >= height {
        return Err(format!("y = {} out of bounds for sensor height {height}", e.y));
    }
    if e.t < t_start || e.t > t_end {
        return Err(format!("t = {} outside [{t_start}, {t_end}]", e.t));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    pub count_pos: usize,
    pub count_neg: usize,
    pub mean_rate_per_second: f64,
    /// Set when the stream spans zero time and the rate is reported as 0.
    pub zero_span: bool,
}

impl StreamStats {
    pub fn total(&self) -> usize {
        self.count_pos + self.count_neg
    }
}

pub fn stream_stats(stream: &EventStream) -> StreamStats {
    let count_pos = stream
        .events
        .iter()
        .filter(|e| e.polarity == Polarity::Pos)
        .count();
    let count_neg = stream.events.len() - count_pos;
    let span = stream.span();
    let zero_span = span == 0;
    let mean_rate_per_second = if zero_span {
        0.0
    } else {
        stream.events.len() as f64 / (span as f64 * 1e-6)
    };
    StreamStats {
        count_pos,
        count_neg,
        mean_rate_per_second,
        zero_span,
    }
}

/// Dense `bins x height x width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    span: Option<(u64, u64)>,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Result<Self> {
        Self::from_data(bins, height, width, vec![0.0; bins * height * width])
    }

    pub fn from_data(bins: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if bins == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "voxel dimensions must be positive, got {bins}x{height}x{width}"
            )));
        }
        if data.len() != bins * height * width {
            return Err(Error::shape(
                format!("{} values for {bins}x{height}x{width}", bins * height * width),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                index: i,
                message: format!("non-finite voxel value {}", data[i]),
            });
        }
        Ok(Self {
            bins,
            height,
            width,
            data,
            span: None,
        })
    }

    pub fn with_span(mut self, t_start: u64, t_end: u64) -> Self {
        self.span = Some((t_start, t_end));
        self
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bins, self.height, self.width)
    }

    pub fn span(&self) -> Option<(u64, u64)> {
        self.span
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, bin: usize, y: usize, x: usize) -> usize {
        (bin * self.height + y) * self.width + x
    }

    pub fn get(&self, bin: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(bin, y, x)]
    }

    pub fn bin(&self, bin: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[bin * plane..(bin + 1) * plane]
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    /// Rebuilds a grid of the same shape (and span) around new values.
    pub fn map_data(&self, data: Vec<f64>) -> Result<Self> {
        let mut out = Self::from_data(self.bins, self.height, self.width, data)?;
        out.span = self.span;
        Ok(out)
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn same_shape(&self, other: &VoxelGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        self.map_data(data)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 + self.data.len() * 4);
        let _ = writeln!(out, "VOX1 {} {} {}", self.bins, self.height, self.width);
        for row in self.data.chunks(self.width) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (dims, values) = parse_dense(text, "VOX1", 3, "voxel file")?;
        Self::from_data(dims[0], dims[1], dims[2], values)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Parses a `<MAGIC> d0 d1 ...` header followed by whitespace-separated
/// decimals whose count is the product of the dimensions.
pub fn parse_dense(
    text: &str,
    magic: &str,
    ndims: usize,
    context: &str,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let err = |line: usize, message: String| Error::Parse {
        context: context.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, format!("missing {magic} header")))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != ndims + 1 || fields[0] != magic {
        return Err(err(hline + 1, format!("expected {magic} header with {ndims} dimensions, got `{header}`")));
    }
    let dims = fields[1..]
        .iter()
        .map(|s| s.parse::<usize>().map_err(|_| err(hline + 1, format!("invalid dimension `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let expected: usize = dims.iter().product();
    let mut values = Vec::with_capacity(expected);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| err(i + 1, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(err(i + 1, format!("non-finite value `{tok}`")));
            }
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(err(
            hline + 1,
            format!("header declares {expected} values, found {}", values.len()),
        ));
    }
    Ok((dims, values))
}

/// Temporal bin of timestamp `t` under hard assignment.
pub fn bin_index(t: u64, t_start: u64, t_end: u64, bins: usize) -> usize {
    let denom = u128::from(t_end - t_start) + 1;
    let num = u128::from(t - t_start) * bins as u128;
    (num / denom) as usize
}

/// Accumulates event polarities into `bins` temporal slices.
///
/// Each event lands in `floor((t - t_start) * bins / (t_end - t_start + 1))`.
pub fn encode_voxel(stream: &EventStream, bins: usize) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be at least 1".into()));
    }
    if stream.span() == 0 {
        return Err(Error::DegenerateSpan {
            t_start: stream.t_start,
            t_end: stream.t_end,
        });
    }
    let (h, w) = (stream.height as usize, stream.width as usize);
    let mut grid = VoxelGrid::zeros(bins, h, w)?;
    for e in &stream.events {
        let b = bin_index(e.t, stream.t_start, stream.t_end, bins);
        let idx = grid.index(b, e.y as usize, e.x as usize);
        grid.data[idx] += e.polarity.value();
    }
    Ok(grid.with_span(stream.t_start, stream.t_end))
}
