//! Motion saliency enhancement (events guided by their own high-frequency
//! content, then fused toward the image branch) and event semantic
//! engraving (image semantics gated per channel, then split into a
//! temporal and a spatial branch).

use crate::error::{Error, Result};
use crate::mrm::{expect_conv, motion_attention, AttentionWeights, MrmConfig, Projection};
use crate::tensor::{
    broadcast_mul, concat_channels, conv1x1, downsample2, dwconv3x3, global_avg_pool, relu, sigmoid,
    split_channels, upsample2, ConvKind, ConvWeights, Tensor4,
};

/// `dw_b(dw_a(x - up(down(x))))`.
pub fn high_freq(x: &Tensor4, hf: &[ConvWeights; 2]) -> Result<Tensor4> {
    let residual = x.sub(&upsample2(&downsample2(x)?))?;
    dwconv3x3(&dwconv3x3(&residual, &hf[0])?, &hf[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsemWeights {
    pub hf: [ConvWeights; 2],
    /// `2N -> N` over `concat(F1, F_I)`.
    pub fuse_pw: ConvWeights,
    pub fuse_dw: [ConvWeights; 2],
    /// `N -> N` logits of the motion gate.
    pub gate: ConvWeights,
    /// `2N -> N` over `concat(F_mix, F2)`.
    pub out: ConvWeights,
}

impl MsemWeights {
    /// Delta and identity kernels with zero gate logits.
    pub fn identity(n: usize) -> Self {
        Self {
            hf: [ConvWeights::delta_depthwise(n), ConvWeights::delta_depthwise(n)],
            fuse_pw: ConvWeights::identity_pointwise(2 * n, n),
            fuse_dw: [ConvWeights::delta_depthwise(n), ConvWeights::delta_depthwise(n)],
            gate: ConvWeights::zero_pointwise(n, n),
            out: ConvWeights::identity_pointwise(2 * n, n),
        }
    }

    pub fn channels(&self) -> usize {
        self.gate.in_channels()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for w in self.hf.iter().chain(&self.fuse_dw) {
            expect_conv(w, ConvKind::Depthwise3x3, n, n)?;
        }
        expect_conv(&self.fuse_pw, ConvKind::Pointwise, 2 * n, n)?;
        expect_conv(&self.gate, ConvKind::Pointwise, n, n)?;
        expect_conv(&self.out, ConvKind::Pointwise, 2 * n, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsemTrace {
    pub saliency: Tensor4,
    pub enhanced: Tensor4,
    pub mix: Tensor4,
    pub gate: Tensor4,
    pub gated: Tensor4,
    pub output: Tensor4,
}

pub fn msem_forward_traced(fe: &Tensor4, fi: &Tensor4, w: &MsemWeights) -> Result<MsemTrace> {
    fe.expect_dims(fi.dims())?;
    w.validate(fe.channels())?;
    let saliency = high_freq(fe, &w.hf)?;
    let enhanced = fe.mul(&saliency)?.add(fe)?;
    let fused = conv1x1(&concat_channels(&enhanced, fi)?, &w.fuse_pw)?;
    let mix = dwconv3x3(&dwconv3x3(&fused, &w.fuse_dw[0])?, &w.fuse_dw[1])?;
    let gate = sigmoid(&conv1x1(&mix, &w.gate)?);
    let gated = gate.mul(&enhanced)?;
    let output = conv1x1(&concat_channels(&mix, &gated)?, &w.out)?;
    Ok(MsemTrace {
        saliency,
        enhanced,
        mix,
        gate,
        gated,
        output,
    })
}

pub fn msem_forward(fe: &Tensor4, fi: &Tensor4, w: &MsemWeights) -> Result<Tensor4> {
    Ok(msem_forward_traced(fe, fi, w)?.output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsemWeights {
    pub encoder: Projection,
    /// `N -> R` squeeze.
    pub ca_reduce: ConvWeights,
    /// `R -> N` excite.
    pub ca_expand: ConvWeights,
    /// `2N -> M` over `concat(F_sem, F_E)`; `M` is even.
    pub fuse: ConvWeights,
    /// Attention over the second (event) half of the `M` mixed channels.
    pub temporal_cfg: MrmConfig,
    pub temporal: AttentionWeights,
    pub spatial_dw: ConvWeights,
    /// `M/2 -> 1` spatial gate logits.
    pub spatial_pw: ConvWeights,
    /// `M -> N` over `concat(event half, semantic half)`.
    pub out: ConvWeights,
}

impl EsemWeights {
    /// Identity encoder and fusion, zero gate logits, uniform temporal
    /// attention; the mixed width equals `2n`.
    pub fn identity(n: usize, temporal_cfg: MrmConfig, reduce: usize) -> Result<Self> {
        if temporal_cfg.n() != n {
            return Err(Error::Config(format!(
                "temporal branch expects {} channels, halves have {n}",
                temporal_cfg.n()
            )));
        }
        Ok(Self {
            encoder: Projection::identity(n),
            ca_reduce: ConvWeights::zero_pointwise(n, reduce),
            ca_expand: ConvWeights::zero_pointwise(reduce, n),
            fuse: ConvWeights::identity_pointwise(2 * n, 2 * n),
            temporal_cfg,
            temporal: AttentionWeights::uniform(n),
            spatial_dw: ConvWeights::delta_depthwise(n),
            spatial_pw: ConvWeights::zero_pointwise(n, 1),
            out: ConvWeights::identity_pointwise(2 * n, n),
        })
    }

    pub fn channels(&self) -> usize {
        self.ca_reduce.in_channels()
    }

    pub fn mixed_channels(&self) -> usize {
        self.fuse.out_channels()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.fuse.out_channels();
        if m % 2 != 0 {
            return Err(Error::Shape(format!("fused channel count {m} must be even")));
        }
        let half = m / 2;
        if self.temporal_cfg.n() != half {
            return Err(Error::Config(format!(
                "temporal branch expects {} channels, halves have {half}",
                self.temporal_cfg.n()
            )));
        }
        self.encoder.validate(n)?;
        let r = self.ca_reduce.out_channels();
        expect_conv(&self.ca_reduce, ConvKind::Pointwise, n, r)?;
        expect_conv(&self.ca_expand, ConvKind::Pointwise, r, n)?;
        expect_conv(&self.fuse, ConvKind::Pointwise, 2 * n, m)?;
        self.temporal.validate(half)?;
        expect_conv(&self.spatial_dw, ConvKind::Depthwise3x3, half, half)?;
        expect_conv(&self.spatial_pw, ConvKind::Pointwise, half, 1)?;
        expect_conv(&self.out, ConvKind::Pointwise, m, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsemTrace {
    pub encoded: Tensor4,
    pub beta: Tensor4,
    pub semantic: Tensor4,
    pub mix: Tensor4,
    pub event_branch: Tensor4,
    pub spatial_gate: Tensor4,
    pub semantic_branch: Tensor4,
    pub output: Tensor4,
}

pub fn esem_forward_traced(fi: &Tensor4, fe: &Tensor4, w: &EsemWeights) -> Result<EsemTrace> {
    fi.expect_dims(fe.dims())?;
    w.validate(fi.channels())?;
    let encoded = w.encoder.apply(fi)?;
    let squeeze = global_avg_pool(&encoded);
    let beta = sigmoid(&conv1x1(&relu(&conv1x1(&squeeze, &w.ca_reduce)?), &w.ca_expand)?);
    let semantic = broadcast_mul(&encoded, &beta)?;
    let mix = conv1x1(&concat_channels(&semantic, fe)?, &w.fuse)?;
    let (semantic_half, event_half) = split_channels(&mix, w.mixed_channels() / 2)?;
    let event_branch = motion_attention(&event_half, &w.temporal_cfg, &w.temporal)?;
    let spatial_gate = sigmoid(&conv1x1(&dwconv3x3(&semantic_half, &w.spatial_dw)?, &w.spatial_pw)?);
    let semantic_branch = broadcast_mul(&semantic_half, &spatial_gate)?;
    let output = conv1x1(&concat_channels(&event_branch, &semantic_branch)?, &w.out)?;
    Ok(EsemTrace {
        encoded,
        beta,
        semantic,
        mix,
        event_branch,
        spatial_gate,
        semantic_branch,
        output,
    })
}

pub fn esem_forward(fi: &Tensor4, fe: &Tensor4, w: &EsemWeights) -> Result<Tensor4> {
    Ok(esem_forward_traced(fi, fe, w)?.output)
}
