//! `MRMW1` weights container.
//!
//! ```text
//! MRMW1
//! SECTION mrm.semantic.q.pw.weight
//! T4 8 8 1 1
//! ...
//! ```
//!
//! Each convolution is stored as `<name>.weight` (pointwise kernels as
//! `(out, in, 1, 1)`, depthwise as `(C, 1, 3, 3)`) and `<name>.bias`
//! (`(1, out, 1, 1)`). Section names are unique; order is sorted.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use evrobust_core::rng::{stream, Domain};

use crate::error::{Error, Result};
use crate::interact::{EsemWeights, MsemWeights};
use crate::mrm::{AttentionWeights, CrossWeights, MrmConfig, MrmWeights, Projection, Qkv};
use crate::tensor::{write_t4, ConvKind, ConvWeights, Tensor4};

pub const MAGIC: &str = "MRMW1";
const SECTION: &str = "SECTION";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    sections: BTreeMap<String, Tensor4>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor4) {
        self.sections.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor4> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing section `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn put_conv(&mut self, name: &str, w: &ConvWeights) {
        self.insert(format!("{name}.weight"), w.kernel_tensor());
        self.insert(format!("{name}.bias"), w.bias_tensor());
    }

    pub fn conv(&self, name: &str, kind: ConvKind, inp: usize, out: usize) -> Result<ConvWeights> {
        let w = ConvWeights::from_tensors(kind, self.get(&format!("{name}.weight"))?, self.get(&format!("{name}.bias"))?)
            .map_err(|e| Error::Weights(format!("`{name}`: {e}")))?;
        if w.in_channels() != inp || w.out_channels() != out {
            return Err(Error::Weights(format!(
                "`{name}`: expected {inp}->{out} channels, found {}->{}",
                w.in_channels(),
                w.out_channels()
            )));
        }
        Ok(w)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\n");
        for (name, t) in &self.sections {
            out.push_str(SECTION);
            out.push(' ');
            out.push_str(name);
            out.push('\n');
            write_t4(&mut out, t);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Weights(format!("missing `{MAGIC}` header"))),
        }
        let mut store = Self::new();
        let mut current: Option<(usize, String, String)> = None;
        let flush = |cur: Option<(usize, String, String)>, store: &mut Self| -> Result<()> {
            if let Some((line, name, body)) = cur {
                let t = Tensor4::from_text(&body)
                    .map_err(|e| Error::Weights(format!("section `{name}` (line {}): {e}", line + 1)))?;
                if store.sections.insert(name.clone(), t).is_some() {
                    return Err(Error::Weights(format!("duplicate section `{name}`")));
                }
            }
            Ok(())
        };
        for (i, line) in lines {
            if let Some(rest) = line.trim().strip_prefix(SECTION) {
                let name = rest.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(Error::Weights(format!("line {}: bad section name", i + 1)));
                }
                flush(current.take(), &mut store)?;
                current = Some((i, name.to_string(), String::new()));
            } else if let Some((_, _, body)) = current.as_mut() {
                body.push_str(line);
                body.push('\n');
            } else {
                return Err(Error::Weights(format!("line {}: data before the first section", i + 1)));
            }
        }
        flush(current, &mut store)?;
        Ok(store)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}

fn put_projection(s: &mut WeightStore, name: &str, p: &Projection) {
    s.put_conv(&format!("{name}.pw"), &p.pw);
    s.put_conv(&format!("{name}.dw"), &p.dw);
}

fn projection(s: &WeightStore, name: &str, n: usize) -> Result<Projection> {
    Ok(Projection {
        pw: s.conv(&format!("{name}.pw"), ConvKind::Pointwise, n, n)?,
        dw: s.conv(&format!("{name}.dw"), ConvKind::Depthwise3x3, n, n)?,
    })
}

fn put_qkv(s: &mut WeightStore, name: &str, w: &Qkv) {
    put_projection(s, &format!("{name}.q"), &w.q);
    put_projection(s, &format!("{name}.k"), &w.k);
    put_projection(s, &format!("{name}.v"), &w.v);
}

fn qkv(s: &WeightStore, name: &str, n: usize) -> Result<Qkv> {
    Ok(Qkv {
        q: projection(s, &format!("{name}.q"), n)?,
        k: projection(s, &format!("{name}.k"), n)?,
        v: projection(s, &format!("{name}.v"), n)?,
    })
}

fn put_attention(s: &mut WeightStore, name: &str, w: &AttentionWeights) {
    put_qkv(s, name, &w.qkv);
    s.put_conv(&format!("{name}.out"), &w.out);
}

fn attention(s: &WeightStore, name: &str, n: usize) -> Result<AttentionWeights> {
    Ok(AttentionWeights {
        qkv: qkv(s, name, n)?,
        out: s.conv(&format!("{name}.out"), ConvKind::Pointwise, n, n)?,
    })
}

impl MrmWeights {
    pub fn store_into(&self, s: &mut WeightStore) {
        put_attention(s, "mrm.semantic", &self.semantic);
        put_attention(s, "mrm.motion", &self.motion);
        put_qkv(s, "mrm.cross.image_to_event", &self.cross.image_to_event);
        put_qkv(s, "mrm.cross.event_to_image", &self.cross.event_to_image);
        s.put_conv("mrm.cross.out", &self.cross.out);
    }

    pub fn load(s: &WeightStore, cfg: &MrmConfig) -> Result<Self> {
        let n = cfg.n();
        Ok(Self {
            semantic: attention(s, "mrm.semantic", n)?,
            motion: attention(s, "mrm.motion", n)?,
            cross: CrossWeights {
                image_to_event: qkv(s, "mrm.cross.image_to_event", n)?,
                event_to_image: qkv(s, "mrm.cross.event_to_image", n)?,
                out: s.conv("mrm.cross.out", ConvKind::Pointwise, 2 * n, n)?,
            },
        })
    }
}

impl MsemWeights {
    pub fn store_into(&self, s: &mut WeightStore) {
        s.put_conv("msem.hf.0", &self.hf[0]);
        s.put_conv("msem.hf.1", &self.hf[1]);
        s.put_conv("msem.fuse.pw", &self.fuse_pw);
        s.put_conv("msem.fuse.dw.0", &self.fuse_dw[0]);
        s.put_conv("msem.fuse.dw.1", &self.fuse_dw[1]);
        s.put_conv("msem.gate", &self.gate);
        s.put_conv("msem.out", &self.out);
    }

    pub fn load(s: &WeightStore, n: usize) -> Result<Self> {
        let dw = |name: &str| s.conv(name, ConvKind::Depthwise3x3, n, n);
        Ok(Self {
            hf: [dw("msem.hf.0")?, dw("msem.hf.1")?],
            fuse_pw: s.conv("msem.fuse.pw", ConvKind::Pointwise, 2 * n, n)?,
            fuse_dw: [dw("msem.fuse.dw.0")?, dw("msem.fuse.dw.1")?],
            gate: s.conv("msem.gate", ConvKind::Pointwise, n, n)?,
            out: s.conv("msem.out", ConvKind::Pointwise, 2 * n, n)?,
        })
    }
}

impl EsemWeights {
    pub fn store_into(&self, s: &mut WeightStore) {
        put_projection(s, "esem.encoder", &self.encoder);
        s.put_conv("esem.ca.reduce", &self.ca_reduce);
        s.put_conv("esem.ca.expand", &self.ca_expand);
        s.put_conv("esem.fuse", &self.fuse);
        put_attention(s, "esem.temporal", &self.temporal);
        s.put_conv("esem.spatial.dw", &self.spatial_dw);
        s.put_conv("esem.spatial.pw", &self.spatial_pw);
        s.put_conv("esem.out", &self.out);
    }

    /// Widths are read from the stored tensors and then validated against
    /// `n` and `temporal_cfg`.
    pub fn load(s: &WeightStore, n: usize, temporal_cfg: MrmConfig) -> Result<Self> {
        let dims = |name: &str| s.get(&format!("{name}.weight")).map(|t| t.dims());
        let r = dims("esem.ca.reduce")?[0];
        let m = dims("esem.fuse")?[0];
        if m % 2 != 0 {
            return Err(Error::Weights(format!("esem.fuse: fused channel count {m} must be even")));
        }
        let half = m / 2;
        let w = Self {
            encoder: projection(s, "esem.encoder", n)?,
            ca_reduce: s.conv("esem.ca.reduce", ConvKind::Pointwise, n, r)?,
            ca_expand: s.conv("esem.ca.expand", ConvKind::Pointwise, r, n)?,
            fuse: s.conv("esem.fuse", ConvKind::Pointwise, 2 * n, m)?,
            temporal_cfg,
            temporal: attention(s, "esem.temporal", half)?,
            spatial_dw: s.conv("esem.spatial.dw", ConvKind::Depthwise3x3, half, half)?,
            spatial_pw: s.conv("esem.spatial.pw", ConvKind::Pointwise, half, 1)?,
            out: s.conv("esem.out", ConvKind::Pointwise, m, n)?,
        };
        w.validate(n).map_err(|e| Error::Weights(e.to_string()))?;
        Ok(w)
    }
}

/// Seeded random weights: pointwise entries uniform in `±scale / sqrt(in)`,
/// depthwise kernels a centred delta plus `±scale / 3` noise, biases in
/// `±scale / 10`.
pub struct RandomInit {
    rng: ChaCha8Rng,
    scale: f64,
}

impl RandomInit {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            rng: stream(seed, Domain::Weights, 0),
            scale,
        }
    }

    fn uniform(&mut self, bound: f64) -> f64 {
        bound * (2.0 * self.rng.random::<f64>() - 1.0)
    }

    fn biases(&mut self, n: usize) -> Vec<f64> {
        let b = self.scale / 10.0;
        (0..n).map(|_| self.uniform(b)).collect()
    }

    pub fn pointwise(&mut self, inp: usize, out: usize) -> ConvWeights {
        let b = self.scale / (inp as f64).sqrt();
        let k = (0..inp * out).map(|_| self.uniform(b)).collect();
        let bias = self.biases(out);
        ConvWeights::pointwise(inp, out, k, bias).expect("valid random pointwise")
    }

    pub fn depthwise(&mut self, c: usize) -> ConvWeights {
        let b = self.scale / 3.0;
        let k = (0..c * 9)
            .map(|i| if i % 9 == 4 { 1.0 } else { 0.0 } + self.uniform(b))
            .collect();
        let bias = self.biases(c);
        ConvWeights::depthwise(c, k, bias).expect("valid random depthwise")
    }

    pub fn projection(&mut self, n: usize) -> Projection {
        Projection {
            pw: self.pointwise(n, n),
            dw: self.depthwise(n),
        }
    }

    pub fn qkv(&mut self, n: usize) -> Qkv {
        Qkv {
            q: self.projection(n),
            k: self.projection(n),
            v: self.projection(n),
        }
    }

    pub fn attention(&mut self, n: usize) -> AttentionWeights {
        AttentionWeights {
            qkv: self.qkv(n),
            out: self.pointwise(n, n),
        }
    }

    pub fn mrm(&mut self, cfg: &MrmConfig) -> MrmWeights {
        let n = cfg.n();
        MrmWeights {
            semantic: self.attention(n),
            motion: self.attention(n),
            cross: CrossWeights {
                image_to_event: self.qkv(n),
                event_to_image: self.qkv(n),
                out: self.pointwise(2 * n, n),
            },
        }
    }

    pub fn msem(&mut self, n: usize) -> MsemWeights {
        MsemWeights {
            hf: [self.depthwise(n), self.depthwise(n)],
            fuse_pw: self.pointwise(2 * n, n),
            fuse_dw: [self.depthwise(n), self.depthwise(n)],
            gate: self.pointwise(n, n),
            out: self.pointwise(2 * n, n),
        }
    }

    /// Mixed width is `2 * temporal_cfg.n()`.
    pub fn esem(&mut self, n: usize, temporal_cfg: MrmConfig, reduce: usize) -> EsemWeights {
        let half = temporal_cfg.n();
        EsemWeights {
            encoder: self.projection(n),
            ca_reduce: self.pointwise(n, reduce),
            ca_expand: self.pointwise(reduce, n),
            fuse: self.pointwise(2 * n, 2 * half),
            temporal_cfg,
            temporal: self.attention(half),
            spatial_dw: self.depthwise(half),
            spatial_pw: self.pointwise(half, 1),
            out: self.pointwise(2 * half, n),
        }
    }
}
