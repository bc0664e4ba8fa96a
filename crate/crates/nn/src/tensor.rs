//! Dense `B x N x H x W` tensors and the handful of kernels the attention
//! and interaction modules need.
//!
//! Every kernel runs a fixed loop nest, so results are bit-reproducible.
//! Depthwise convolutions zero-pad; bilinear upsampling uses the
//! `align_corners = false` convention (`src = (dst + 0.5) / 2 - 0.5`,
//! clamped to the image).

use std::fmt::Write as _;

use evrobust_core::events::parse_dense;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("tensor dims must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "{dims:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        assert!(!dims.contains(&0), "tensor dims must be positive");
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [b, n, h, w] = dims;
        let mut data = Vec::with_capacity(b * n * h * w);
        for ib in 0..b {
            for c in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ib, c, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(b, c, y, x)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_dims(other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor4) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor4) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor4) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn expect_dims(&self, dims: [usize; 4]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Shape(format!("expected {dims:?}, got {:?}", self.dims)));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `T4 <B> <N> <H> <W>` header followed by one line per `(b, n, y)` row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_t4(&mut out, self);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (dims, values) = parse_dense(text, "T4", 4, "tensor dump")?;
        Self::new([dims[0], dims[1], dims[2], dims[3]], values)
    }
}

pub(crate) fn write_t4(out: &mut String, t: &Tensor4) {
    let [b, n, h, w] = t.dims;
    let _ = writeln!(out, "T4 {b} {n} {h} {w}");
    for row in t.data.chunks(w) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Pointwise,
    Depthwise3x3,
}

/// Pointwise kernels are `out x in`; depthwise kernels are `channels x 3 x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    kind: ConvKind,
    in_channels: usize,
    out_channels: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvWeights {
    pub fn pointwise(in_channels: usize, out_channels: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::checked(ConvKind::Pointwise, in_channels, out_channels, kernel, bias)
    }

    pub fn depthwise(channels: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::checked(ConvKind::Depthwise3x3, channels, channels, kernel, bias)
    }

    fn checked(
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Shape("convolution channel counts must be positive".into()));
        }
        let expected = match kind {
            ConvKind::Pointwise => in_channels * out_channels,
            ConvKind::Depthwise3x3 => in_channels * 9,
        };
        if kernel.len() != expected {
            return Err(Error::Shape(format!(
                "{kind:?} {in_channels}->{out_channels} kernel needs {expected} values, got {}",
                kernel.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "bias needs {out_channels} values, got {}",
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            kind,
            in_channels,
            out_channels,
            kernel,
            bias,
        })
    }

    /// `out[o] = in[o]` for `o < min(in, out)`, zero bias.
    pub fn identity_pointwise(in_channels: usize, out_channels: usize) -> Self {
        let mut k = vec![0.0; in_channels * out_channels];
        for o in 0..in_channels.min(out_channels) {
            k[o * in_channels + o] = 1.0;
        }
        Self::pointwise(in_channels, out_channels, k, vec![0.0; out_channels]).expect("valid identity")
    }

    pub fn zero_pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::pointwise(in_channels, out_channels, vec![0.0; in_channels * out_channels], vec![0.0; out_channels])
            .expect("valid zeros")
    }

    /// Centred delta kernel per channel, zero bias.
    pub fn delta_depthwise(channels: usize) -> Self {
        let mut k = vec![0.0; channels * 9];
        for c in 0..channels {
            k[c * 9 + 4] = 1.0;
        }
        Self::depthwise(channels, k, vec![0.0; channels]).expect("valid delta")
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.out_channels {
            return Err(Error::Shape(format!("bias needs {} values", self.out_channels)));
        }
        self.bias = bias;
        Ok(self)
    }

    /// Kernel as a tensor: `(out, in, 1, 1)` or `(channels, 1, 3, 3)`.
    pub fn kernel_tensor(&self) -> Tensor4 {
        let dims = match self.kind {
            ConvKind::Pointwise => [self.out_channels, self.in_channels, 1, 1],
            ConvKind::Depthwise3x3 => [self.in_channels, 1, 3, 3],
        };
        Tensor4 {
            dims,
            data: self.kernel.clone(),
        }
    }

    pub fn bias_tensor(&self) -> Tensor4 {
        Tensor4 {
            dims: [1, self.out_channels, 1, 1],
            data: self.bias.clone(),
        }
    }

    pub fn from_tensors(kind: ConvKind, kernel: &Tensor4, bias: &Tensor4) -> Result<Self> {
        let [a, b, kh, kw] = kernel.dims();
        match kind {
            ConvKind::Pointwise if (kh, kw) == (1, 1) => {
                bias.expect_dims([1, a, 1, 1])?;
                Self::pointwise(b, a, kernel.data.clone(), bias.data.clone())
            }
            ConvKind::Depthwise3x3 if (b, kh, kw) == (1, 3, 3) => {
                bias.expect_dims([1, a, 1, 1])?;
                Self::depthwise(a, kernel.data.clone(), bias.data.clone())
            }
            _ => Err(Error::Shape(format!("invalid {kind:?} kernel dims {:?}", kernel.dims()))),
        }
    }
}

fn expect_kind(w: &ConvWeights, kind: ConvKind, x: &Tensor4) -> Result<()> {
    if w.kind != kind {
        return Err(Error::Shape(format!("expected {kind:?} weights, got {:?}", w.kind)));
    }
    if w.in_channels != x.channels() {
        return Err(Error::Shape(format!(
            "weights expect {} input channels, tensor has {}",
            w.in_channels,
            x.channels()
        )));
    }
    Ok(())
}

/// Per-pixel linear map across channels plus bias.
pub fn conv1x1(x: &Tensor4, w: &ConvWeights) -> Result<Tensor4> {
    expect_kind(w, ConvKind::Pointwise, x)?;
    let [b, n, h, wd] = x.dims;
    let plane = h * wd;
    let m = w.out_channels;
    let mut out = vec![0.0; b * m * plane];
    for ib in 0..b {
        let src = &x.data[ib * n * plane..(ib + 1) * n * plane];
        let dst = &mut out[ib * m * plane..(ib + 1) * m * plane];
        for o in 0..m {
            let row = &mut dst[o * plane..(o + 1) * plane];
            row.fill(w.bias[o]);
            for i in 0..n {
                let k = w.kernel[o * n + i];
                if k == 0.0 {
                    continue;
                }
                for (d, s) in row.iter_mut().zip(&src[i * plane..(i + 1) * plane]) {
                    *d += k * s;
                }
            }
        }
    }
    Ok(Tensor4 {
        dims: [b, m, h, wd],
        data: out,
    })
}

/// Per-channel 3x3 cross-correlation with zero padding.
pub fn dwconv3x3(x: &Tensor4, w: &ConvWeights) -> Result<Tensor4> {
    expect_kind(w, ConvKind::Depthwise3x3, x)?;
    let [b, n, h, wd] = x.dims;
    let mut out = vec![0.0; x.data.len()];
    for ib in 0..b {
        for c in 0..n {
            let k = &w.kernel[c * 9..c * 9 + 9];
            let base = (ib * n + c) * h * wd;
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = w.bias[c];
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= wd as isize {
                                continue;
                            }
                            acc += k[ky * 3 + kx] * x.data[base + sy as usize * wd + sx as usize];
                        }
                    }
                    out[base + y * wd + xx] = acc;
                }
            }
        }
    }
    Ok(Tensor4 {
        dims: x.dims,
        data: out,
    })
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor4) -> Tensor4 {
    x.map(sigmoid_scalar)
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// 2x2 mean pooling.
pub fn downsample2(x: &Tensor4) -> Result<Tensor4> {
    let [b, n, h, w] = x.dims;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("downsampling needs even spatial dims, got {h}x{w}")));
    }
    Ok(Tensor4::from_fn([b, n, h / 2, w / 2], |ib, c, y, xx| {
        let (sy, sx) = (2 * y, 2 * xx);
        // pairwise sums keep a flat block exactly flat
        ((x.at(ib, c, sy, sx) + x.at(ib, c, sy, sx + 1)) + (x.at(ib, c, sy + 1, sx) + x.at(ib, c, sy + 1, sx + 1))) / 4.0
    }))
}

fn bilinear_source(dst: usize, src_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear upsampling to `2H x 2W`.
pub fn upsample2(x: &Tensor4) -> Tensor4 {
    let [b, n, h, w] = x.dims;
    let ys: Vec<_> = (0..2 * h).map(|y| bilinear_source(y, h)).collect();
    let xs: Vec<_> = (0..2 * w).map(|xx| bilinear_source(xx, w)).collect();
    Tensor4::from_fn([b, n, 2 * h, 2 * w], |ib, c, y, xx| {
        let (y0, y1, ly) = ys[y];
        let (x0, x1, lx) = xs[xx];
        // lerp form: equal neighbours reproduce exactly
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let top = lerp(x.at(ib, c, y0, x0), x.at(ib, c, y0, x1), lx);
        let bottom = lerp(x.at(ib, c, y1, x0), x.at(ib, c, y1, x1), lx);
        lerp(top, bottom, ly)
    })
}

pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let [ba, na, h, w] = a.dims;
    let [bb, nb, hb, wb] = b.dims;
    if (ba, h, w) != (bb, hb, wb) {
        return Err(Error::Shape(format!("cannot concatenate {:?} and {:?}", a.dims, b.dims)));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    for ib in 0..ba {
        data.extend_from_slice(&a.data[ib * na * plane..(ib + 1) * na * plane]);
        data.extend_from_slice(&b.data[ib * nb * plane..(ib + 1) * nb * plane]);
    }
    Ok(Tensor4 {
        dims: [ba, na + nb, h, w],
        data,
    })
}

/// Splits into the first `k` channels and the rest.
pub fn split_channels(x: &Tensor4, k: usize) -> Result<(Tensor4, Tensor4)> {
    let [b, n, h, w] = x.dims;
    if k == 0 || k >= n {
        return Err(Error::Shape(format!("split point {k} must lie in 1..{n}")));
    }
    let plane = h * w;
    let (mut a, mut r) = (Vec::new(), Vec::new());
    for ib in 0..b {
        let s = &x.data[ib * n * plane..(ib + 1) * n * plane];
        a.extend_from_slice(&s[..k * plane]);
        r.extend_from_slice(&s[k * plane..]);
    }
    Ok((
        Tensor4 {
            dims: [b, k, h, w],
            data: a,
        },
        Tensor4 {
            dims: [b, n - k, h, w],
            data: r,
        },
    ))
}

/// Global spatial mean, `B x N x 1 x 1`.
pub fn global_avg_pool(x: &Tensor4) -> Tensor4 {
    let [b, n, h, w] = x.dims;
    let plane = h * w;
    let data = x
        .data
        .chunks(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor4 {
        dims: [b, n, 1, 1],
        data,
    }
}

/// Multiplies by a `B x N x 1 x 1` (per channel) or `B x 1 x H x W`
/// (per pixel) gate.
pub fn broadcast_mul(x: &Tensor4, gate: &Tensor4) -> Result<Tensor4> {
    let [b, n, h, w] = x.dims;
    let g = gate.dims;
    if g == [b, n, 1, 1] {
        Ok(Tensor4::from_fn(x.dims, |ib, c, y, xx| x.at(ib, c, y, xx) * gate.at(ib, c, 0, 0)))
    } else if g == [b, 1, h, w] {
        Ok(Tensor4::from_fn(x.dims, |ib, c, y, xx| x.at(ib, c, y, xx) * gate.at(ib, 0, y, xx)))
    } else {
        Err(Error::Shape(format!("gate {g:?} does not broadcast over {:?}", x.dims)))
    }
}

/// Regroups channels `c * T + t` as `t * C + c`.
pub fn permute_channel_time(x: &Tensor4, c: usize, t: usize) -> Result<Tensor4> {
    let [b, n, h, w] = x.dims;
    if c * t != n {
        return Err(Error::Shape(format!("{c} x {t} does not factor {n} channels")));
    }
    Ok(Tensor4::from_fn(x.dims, |ib, ch, y, xx| {
        let (ti, ci) = (ch / c, ch % c);
        x.at(ib, ci * t + ti, y, xx)
    })
    .reshaped([b, n, h, w]))
}

/// Inverse of [`permute_channel_time`].
pub fn unpermute_channel_time(x: &Tensor4, c: usize, t: usize) -> Result<Tensor4> {
    permute_channel_time(x, t, c)
}

impl Tensor4 {
    fn reshaped(self, dims: [usize; 4]) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), self.data.len());
        Self { dims, data: self.data }
    }
}

/// A stack of `count` row-major `rows x cols` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatStack {
    count: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatStack {
    pub fn new(count: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * rows * cols {
            return Err(Error::Shape(format!(
                "{count}x{rows}x{cols} stack needs {} values, got {}",
                count * rows * cols,
                data.len()
            )));
        }
        Ok(Self { count, rows, cols, data })
    }

    pub fn identity(count: usize, n: usize) -> Self {
        let mut data = vec![0.0; count * n * n];
        for m in 0..count {
            for i in 0..n {
                data[m * n * n + i * n + i] = 1.0;
            }
        }
        Self {
            count,
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.count, self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, m: usize, r: usize, c: usize) -> f64 {
        self.data[(m * self.rows + r) * self.cols + c]
    }

    pub fn row(&self, m: usize, r: usize) -> &[f64] {
        let start = (m * self.rows + r) * self.cols;
        &self.data[start..start + self.cols]
    }

    pub fn transpose(&self) -> MatStack {
        let mut data = vec![0.0; self.data.len()];
        for m in 0..self.count {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    data[(m * self.cols + c) * self.rows + r] = self.get(m, r, c);
                }
            }
        }
        MatStack {
            count: self.count,
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Reinterprets a tensor as `B * groups` matrices of `rows` tokens.
    pub fn from_tensor(x: &Tensor4, groups: usize, rows: usize) -> Result<Self> {
        let [b, n, h, w] = x.dims;
        let per_batch = n * h * w;
        if groups * rows == 0 || per_batch % (groups * rows) != 0 || n % (groups * rows) != 0 {
            return Err(Error::Shape(format!(
                "{groups} groups of {rows} tokens do not tile {n} channels"
            )));
        }
        Self::new(b * groups, rows, per_batch / (groups * rows), x.data.clone())
    }

    pub fn into_tensor(self, dims: [usize; 4]) -> Result<Tensor4> {
        Tensor4::new(dims, self.data)
    }
}

pub fn softmax_slice(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_lastdim(x: &MatStack) -> MatStack {
    let mut out = x.clone();
    for row in out.data.chunks_mut(x.cols) {
        softmax_slice(row);
    }
    out
}

pub fn matmul_batched(a: &MatStack, b: &MatStack) -> Result<MatStack> {
    if a.count != b.count || a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {:?} by {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut data = vec![0.0; a.count * m * n];
    for s in 0..a.count {
        for i in 0..m {
            let dst = &mut data[(s * m + i) * n..(s * m + i + 1) * n];
            for p in 0..k {
                let av = a.data[(s * m + i) * k + p];
                let brow = &b.data[(s * k + p) * n..(s * k + p + 1) * n];
                for (d, bv) in dst.iter_mut().zip(brow) {
                    *d += av * bv;
                }
            }
        }
    }
    MatStack::new(a.count, m, n, data)
}
