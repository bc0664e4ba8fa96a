//! Modality-specific attention.
//!
//! Features are `B x N x H x W` with `N = C * T` and channel `c * T + t`
//! holding semantic channel `c` at temporal slot `t`. Semantic (channel)
//! tokens come from a plain reshape to `B x L x C_L x (T*H*W)`; motion
//! (temporal) tokens first regroup channels to `t * C + c` and then reshape
//! to `B x L x T_L x (C*H*W)`.
//!
//! Attention is `softmax(Q K^T)` with no temperature, and the mixed tokens
//! are the matrix product `A V`.

use crate::error::{Error, Result};
use crate::tensor::{
    concat_channels, conv1x1, dwconv3x3, matmul_batched, permute_channel_time, softmax_lastdim,
    unpermute_channel_time, ConvKind, ConvWeights, MatStack, Tensor4,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MrmConfig {
    c: usize,
    t: usize,
    heads: usize,
    residual: bool,
}

impl MrmConfig {
    /// Residuals are on by default.
    pub fn new(c: usize, t: usize, heads: usize) -> Result<Self> {
        if c == 0 || t == 0 || heads == 0 {
            return Err(Error::Config("C, T and L must be positive".into()));
        }
        if c % heads != 0 || t % heads != 0 {
            return Err(Error::Config(format!("L = {heads} must divide C = {c} and T = {t}")));
        }
        Ok(Self {
            c,
            t,
            heads,
            residual: true,
        })
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn n(&self) -> usize {
        self.c * self.t
    }

    pub fn c_l(&self) -> usize {
        self.c / self.heads
    }

    pub fn t_l(&self) -> usize {
        self.t / self.heads
    }

    pub fn check(&self, x: &Tensor4) -> Result<()> {
        if x.channels() != self.n() {
            return Err(Error::Shape(format!(
                "features have {} channels, config expects N = {}",
                x.channels(),
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tokens {
    /// `C_L` tokens per head over `T*H*W`.
    Channel,
    /// `T_L` tokens per head over `C*H*W`.
    Temporal,
}

pub fn tokenize(x: &Tensor4, cfg: &MrmConfig, tokens: Tokens) -> Result<MatStack> {
    cfg.check(x)?;
    match tokens {
        Tokens::Channel => MatStack::from_tensor(x, cfg.heads, cfg.c_l()),
        Tokens::Temporal => {
            let p = permute_channel_time(x, cfg.c, cfg.t)?;
            MatStack::from_tensor(&p, cfg.heads, cfg.t_l())
        }
    }
}

pub fn untokenize(m: MatStack, dims: [usize; 4], cfg: &MrmConfig, tokens: Tokens) -> Result<Tensor4> {
    let x = m.into_tensor(dims)?;
    match tokens {
        Tokens::Channel => Ok(x),
        Tokens::Temporal => unpermute_channel_time(&x, cfg.c, cfg.t),
    }
}

/// Pointwise then depthwise 3x3, both `N -> N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub pw: ConvWeights,
    pub dw: ConvWeights,
}

impl Projection {
    pub fn identity(n: usize) -> Self {
        Self {
            pw: ConvWeights::identity_pointwise(n, n),
            dw: ConvWeights::delta_depthwise(n),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            pw: ConvWeights::zero_pointwise(n, n),
            dw: ConvWeights::delta_depthwise(n),
        }
    }

    pub fn apply(&self, x: &Tensor4) -> Result<Tensor4> {
        dwconv3x3(&conv1x1(x, &self.pw)?, &self.dw)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        expect_conv(&self.pw, ConvKind::Pointwise, n, n)?;
        expect_conv(&self.dw, ConvKind::Depthwise3x3, n, n)
    }
}

pub(crate) fn expect_conv(w: &ConvWeights, kind: ConvKind, inp: usize, out: usize) -> Result<()> {
    if w.kind() != kind || w.in_channels() != inp || w.out_channels() != out {
        return Err(Error::Weights(format!(
            "expected {kind:?} {inp}->{out}, got {:?} {}->{}",
            w.kind(),
            w.in_channels(),
            w.out_channels()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qkv {
    pub q: Projection,
    pub k: Projection,
    pub v: Projection,
}

impl Qkv {
    /// Zero query/key projections and identity values: uniform attention.
    pub fn uniform(n: usize) -> Self {
        Self {
            q: Projection::zero(n),
            k: Projection::zero(n),
            v: Projection::identity(n),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.q.validate(n)?;
        self.k.validate(n)?;
        self.v.validate(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub qkv: Qkv,
    pub out: ConvWeights,
}

impl AttentionWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            qkv: Qkv::uniform(n),
            out: ConvWeights::identity_pointwise(n, n),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.qkv.validate(n)?;
        expect_conv(&self.out, ConvKind::Pointwise, n, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// `B * L` stacks of token-by-token attention.
    pub attention: MatStack,
    /// `A V` in feature layout, before the output projection.
    pub mixed: Tensor4,
    pub output: Tensor4,
}

/// Queries and keys from `qk_src`, values from `v_src`.
pub fn attend(
    qk_src: &Tensor4,
    v_src: &Tensor4,
    cfg: &MrmConfig,
    tokens: Tokens,
    w: &Qkv,
) -> Result<(MatStack, Tensor4)> {
    cfg.check(qk_src)?;
    qk_src.expect_dims(v_src.dims())?;
    let q = tokenize(&w.q.apply(qk_src)?, cfg, tokens)?;
    let k = tokenize(&w.k.apply(qk_src)?, cfg, tokens)?;
    let v = tokenize(&w.v.apply(v_src)?, cfg, tokens)?;
    let a = softmax_lastdim(&matmul_batched(&q, &k.transpose())?);
    let mixed = untokenize(matmul_batched(&a, &v)?, v_src.dims(), cfg, tokens)?;
    Ok((a, mixed))
}

fn self_attention(x: &Tensor4, cfg: &MrmConfig, w: &AttentionWeights, tokens: Tokens) -> Result<AttentionTrace> {
    w.validate(cfg.n())?;
    let (attention, mixed) = attend(x, x, cfg, tokens, &w.qkv)?;
    let mut output = conv1x1(&mixed, &w.out)?;
    if cfg.residual {
        output = output.add(x)?;
    }
    Ok(AttentionTrace {
        attention,
        mixed,
        output,
    })
}

pub fn semantic_attention_traced(x: &Tensor4, cfg: &MrmConfig, w: &AttentionWeights) -> Result<AttentionTrace> {
    self_attention(x, cfg, w, Tokens::Channel)
}

pub fn semantic_attention(x: &Tensor4, cfg: &MrmConfig, w: &AttentionWeights) -> Result<Tensor4> {
    Ok(semantic_attention_traced(x, cfg, w)?.output)
}

pub fn motion_attention_traced(x: &Tensor4, cfg: &MrmConfig, w: &AttentionWeights) -> Result<AttentionTrace> {
    self_attention(x, cfg, w, Tokens::Temporal)
}

pub fn motion_attention(x: &Tensor4, cfg: &MrmConfig, w: &AttentionWeights) -> Result<Tensor4> {
    Ok(motion_attention_traced(x, cfg, w)?.output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossWeights {
    /// Queries/keys from the image features, values from the events.
    pub image_to_event: Qkv,
    /// Queries/keys from the events, values from the image features.
    pub event_to_image: Qkv,
    /// `2N -> N` over `concat(image_to_event, event_to_image)`.
    pub out: ConvWeights,
}

impl CrossWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            image_to_event: Qkv::uniform(n),
            event_to_image: Qkv::uniform(n),
            out: ConvWeights::identity_pointwise(2 * n, n),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.image_to_event.validate(n)?;
        self.event_to_image.validate(n)?;
        expect_conv(&self.out, ConvKind::Pointwise, 2 * n, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTrace {
    pub attention_image_to_event: MatStack,
    pub attention_event_to_image: MatStack,
    pub image_to_event: Tensor4,
    pub event_to_image: Tensor4,
    pub output: Tensor4,
}

/// The two inputs play different roles, so no residual is added here.
pub fn cross_modality_traced(fi: &Tensor4, fe: &Tensor4, cfg: &MrmConfig, w: &CrossWeights) -> Result<CrossTrace> {
    w.validate(cfg.n())?;
    fi.expect_dims(fe.dims())?;
    let (a_ie, ie) = attend(fi, fe, cfg, Tokens::Temporal, &w.image_to_event)?;
    let (a_ei, ei) = attend(fe, fi, cfg, Tokens::Channel, &w.event_to_image)?;
    let output = conv1x1(&concat_channels(&ie, &ei)?, &w.out)?;
    Ok(CrossTrace {
        attention_image_to_event: a_ie,
        attention_event_to_image: a_ei,
        image_to_event: ie,
        event_to_image: ei,
        output,
    })
}

pub fn cross_modality(fi: &Tensor4, fe: &Tensor4, cfg: &MrmConfig, w: &CrossWeights) -> Result<Tensor4> {
    Ok(cross_modality_traced(fi, fe, cfg, w)?.output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrmWeights {
    pub semantic: AttentionWeights,
    pub motion: AttentionWeights,
    pub cross: CrossWeights,
}

impl MrmWeights {
    pub fn uniform(cfg: &MrmConfig) -> Self {
        let n = cfg.n();
        Self {
            semantic: AttentionWeights::uniform(n),
            motion: AttentionWeights::uniform(n),
            cross: CrossWeights::uniform(n),
        }
    }

    pub fn validate(&self, cfg: &MrmConfig) -> Result<()> {
        self.semantic.validate(cfg.n())?;
        self.motion.validate(cfg.n())?;
        self.cross.validate(cfg.n())
    }
}

/// Semantic attention on the image branch, motion attention on the event
/// branch, then the cross-modality exchange.
pub fn mrm_forward(fi: &Tensor4, fe: &Tensor4, cfg: &MrmConfig, w: &MrmWeights) -> Result<Tensor4> {
    let fi2 = semantic_attention(fi, cfg, &w.semantic)?;
    let fe2 = motion_attention(fe, cfg, &w.motion)?;
    cross_modality(&fi2, &fe2, cfg, &w.cross)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(dims: [usize; 4], phase: f64) -> Tensor4 {
        let mut i = 0.0;
        Tensor4::from_fn(dims, |_, _, _, _| {
            i += 1.0;
            (i * 0.61 + phase).sin()
        })
    }

    #[test]
    fn config_validation() {
        assert!(MrmConfig::new(4, 2, 2).is_ok());
        assert!(MrmConfig::new(4, 3, 2).is_err());
        assert!(MrmConfig::new(3, 2, 2).is_err());
        assert!(MrmConfig::new(0, 2, 1).is_err());
        let cfg = MrmConfig::new(6, 4, 2).unwrap();
        assert_eq!((cfg.n(), cfg.c_l(), cfg.t_l()), (24, 3, 2));
    }

    #[test]
    fn uniform_attention_averages_value_tokens() {
        let cfg = MrmConfig::new(4, 2, 2).unwrap().with_residual(false);
        let x = wave([1, 8, 3, 3], 0.0);
        let tr = semantic_attention_traced(&x, &cfg, &AttentionWeights::uniform(8)).unwrap();
        assert!(tr.attention.data().iter().all(|v| (*v - 0.5).abs() < 1e-15));
        let v = tokenize(&x, &cfg, Tokens::Channel).unwrap();
        let out = tokenize(&tr.output, &cfg, Tokens::Channel).unwrap();
        let (g, rows, cols) = v.shape();
        for m in 0..g {
            for c in 0..cols {
                let mean = (0..rows).map(|r| v.get(m, r, c)).sum::<f64>() / rows as f64;
                for r in 0..rows {
                    assert!((out.get(m, r, c) - mean).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn residual_adds_input() {
        let cfg = MrmConfig::new(4, 2, 2).unwrap();
        let x = wave([1, 8, 2, 2], 0.3);
        let with = semantic_attention(&x, &cfg, &AttentionWeights::uniform(8)).unwrap();
        let without = semantic_attention(&x, &cfg.with_residual(false), &AttentionWeights::uniform(8)).unwrap();
        assert!(with.sub(&without).unwrap().max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn single_temporal_token_passes_values_through() {
        let cfg = MrmConfig::new(2, 2, 2).unwrap().with_residual(false);
        let mut w = AttentionWeights::uniform(4);
        w.qkv.q = Projection::identity(4);
        w.qkv.k = Projection::identity(4);
        let x = wave([2, 4, 3, 2], 1.0);
        let tr = motion_attention_traced(&x, &cfg, &w).unwrap();
        assert_eq!(tr.attention.shape(), (4, 1, 1));
        assert!(tr.attention.data().iter().all(|v| *v == 1.0));
        assert!(tr.output.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn cross_collapses_to_self_attention() {
        let cfg = MrmConfig::new(4, 2, 2).unwrap();
        let x = wave([1, 8, 3, 3], 0.2);
        let mut w = CrossWeights::uniform(8);
        w.image_to_event.q = Projection::identity(8);
        w.event_to_image.k = Projection::identity(8);
        let motion = AttentionWeights {
            qkv: w.image_to_event.clone(),
            out: ConvWeights::identity_pointwise(8, 8),
        };
        let semantic = AttentionWeights {
            qkv: w.event_to_image.clone(),
            out: ConvWeights::identity_pointwise(8, 8),
        };
        let tr = cross_modality_traced(&x, &x, &cfg, &w).unwrap();
        assert_eq!(tr.image_to_event, motion_attention_traced(&x, &cfg, &motion).unwrap().mixed);
        assert_eq!(tr.event_to_image, semantic_attention_traced(&x, &cfg, &semantic).unwrap().mixed);
    }

    #[test]
    fn zero_values_give_zero_mixed_features() {
        let cfg = MrmConfig::new(2, 2, 1).unwrap();
        let z = Tensor4::zeros([1, 4, 2, 2]);
        let tr = cross_modality_traced(&z, &z, &cfg, &CrossWeights::uniform(4)).unwrap();
        assert!(tr.image_to_event.data().iter().all(|v| *v == 0.0));
        assert!(tr.event_to_image.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_and_weight_errors() {
        let cfg = MrmConfig::new(4, 2, 2).unwrap();
        let x = wave([1, 6, 2, 2], 0.0);
        assert!(semantic_attention(&x, &cfg, &AttentionWeights::uniform(8)).is_err());
        let y = wave([1, 8, 2, 2], 0.0);
        assert!(semantic_attention(&y, &cfg, &AttentionWeights::uniform(6)).is_err());
        assert!(cross_modality(&y, &wave([1, 8, 2, 3], 0.0), &cfg, &CrossWeights::uniform(8)).is_err());
    }

    #[test]
    fn mrm_keeps_feature_shape() {
        let cfg = MrmConfig::new(4, 4, 2).unwrap();
        let fi = wave([2, 16, 4, 3], 0.0);
        let fe = wave([2, 16, 4, 3], 2.0);
        let out = mrm_forward(&fi, &fe, &cfg, &MrmWeights::uniform(&cfg)).unwrap();
        assert_eq!(out.dims(), fi.dims());
    }
}
