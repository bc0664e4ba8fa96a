//! Naive reference implementations on nested `Vec`s. They share no code
//! with the library kernels beyond the weight accessors.

#![allow(dead_code)]

use evrobust_nn::interact::{EsemWeights, MsemWeights};
use evrobust_nn::mrm::{AttentionWeights, MrmConfig, Projection, Qkv};
use evrobust_nn::tensor::{ConvWeights, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// `[b][c][y][x]`
pub type Nd = Vec<Vec<Vec<Vec<f64>>>>;

pub fn to_nd(t: &Tensor4) -> Nd {
    let [b, n, h, w] = t.dims();
    (0..b)
        .map(|ib| {
            (0..n)
                .map(|c| (0..h).map(|y| (0..w).map(|x| t.at(ib, c, y, x)).collect()).collect())
                .collect()
        })
        .collect()
}

pub fn from_nd(a: &Nd) -> Tensor4 {
    let dims = [a.len(), a[0].len(), a[0][0].len(), a[0][0][0].len()];
    let flat = a.iter().flatten().flatten().flatten().copied().collect();
    Tensor4::new(dims, flat).unwrap()
}

pub fn dims(a: &Nd) -> (usize, usize, usize, usize) {
    (a.len(), a[0].len(), a[0][0].len(), a[0][0][0].len())
}

pub fn zeros(b: usize, n: usize, h: usize, w: usize) -> Nd {
    vec![vec![vec![vec![0.0; w]; h]; n]; b]
}

pub fn random_tensor(rng: &mut ChaCha12Rng, d: [usize; 4], scale: f64) -> Tensor4 {
    Tensor4::from_fn(d, |_, _, _, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn max_diff(a: &Tensor4, b: &Tensor4) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn pw(x: &Nd, w: &ConvWeights) -> Nd {
    let (b, n, h, wd) = dims(x);
    let m = w.out_channels();
    let mut out = zeros(b, m, h, wd);
    for ib in 0..b {
        for o in 0..m {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = w.bias()[o];
                    for i in 0..n {
                        acc += w.kernel()[o * n + i] * x[ib][i][y][xx];
                    }
                    out[ib][o][y][xx] = acc;
                }
            }
        }
    }
    out
}

/// Explicitly padded copy, then a full 3x3 sum.
pub fn dw(x: &Nd, w: &ConvWeights) -> Nd {
    let (b, n, h, wd) = dims(x);
    let mut out = zeros(b, n, h, wd);
    for ib in 0..b {
        for c in 0..n {
            let mut pad = vec![vec![0.0; wd + 2]; h + 2];
            for y in 0..h {
                for xx in 0..wd {
                    pad[y + 1][xx + 1] = x[ib][c][y][xx];
                }
            }
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = w.bias()[c];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += w.kernel()[c * 9 + ky * 3 + kx] * pad[y + ky][xx + kx];
                        }
                    }
                    out[ib][c][y][xx] = acc;
                }
            }
        }
    }
    out
}

pub fn map(x: &Nd, f: impl Fn(f64) -> f64 + Copy) -> Nd {
    x.iter()
        .map(|b| b.iter().map(|c| c.iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect()).collect())
        .collect()
}

pub fn zip(a: &Nd, b: &Nd, f: impl Fn(f64, f64) -> f64 + Copy) -> Nd {
    a.iter()
        .zip(b)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a.iter().zip(b).map(|(a, b)| f(*a, *b)).collect()).collect())
                .collect()
        })
        .collect()
}

pub fn cat(a: &Nd, b: &Nd) -> Nd {
    a.iter().zip(b).map(|(a, b)| a.iter().chain(b).cloned().collect()).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn down(x: &Nd) -> Nd {
    let (b, n, h, w) = dims(x);
    let mut out = zeros(b, n, h / 2, w / 2);
    for ib in 0..b {
        for c in 0..n {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let mut s = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            s += x[ib][c][2 * y + dy][2 * xx + dx];
                        }
                    }
                    out[ib][c][y][xx] = s / 4.0;
                }
            }
        }
    }
    out
}

/// Half-pixel bilinear doubling written as the fixed 1/4, 3/4 stencil with
/// edge replication.
fn up_1d(v: &[f64]) -> Vec<f64> {
    let n = v.len() as isize;
    let at = |i: isize| v[i.clamp(0, n - 1) as usize];
    let mut out = Vec::with_capacity(2 * v.len());
    for i in 0..n {
        out.push(0.25 * at(i - 1) + 0.75 * at(i));
        out.push(0.75 * at(i) + 0.25 * at(i + 1));
    }
    out
}

pub fn up(x: &Nd) -> Nd {
    x.iter()
        .map(|b| {
            b.iter()
                .map(|plane| {
                    let rows: Vec<Vec<f64>> = plane.iter().map(|r| up_1d(r)).collect();
                    let w = rows[0].len();
                    let cols: Vec<Vec<f64>> = (0..w).map(|xx| up_1d(&rows.iter().map(|r| r[xx]).collect::<Vec<_>>())).collect();
                    (0..cols[0].len()).map(|y| (0..w).map(|xx| cols[xx][y]).collect()).collect()
                })
                .collect()
        })
        .collect()
}

pub fn proj(x: &Nd, p: &Projection) -> Nd {
    dw(&pw(x, &p.pw), &p.dw)
}

/// Channels belonging to token `i` of head `l`, as `(channel, slot)` pairs
/// enumerating its context alongside `(y, x)`.
fn token_channels(cfg: &MrmConfig, temporal: bool, l: usize, i: usize) -> Vec<usize> {
    let (c, t) = (cfg.c(), cfg.t());
    if temporal {
        let tau = l * cfg.t_l() + i;
        (0..c).map(|ch| ch * t + tau).collect()
    } else {
        let ch = l * cfg.c_l() + i;
        (0..t).map(|s| ch * t + s).collect()
    }
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Brute force over all token pairs. Returns `(attention[b][l][i][j], mixed)`.
pub fn attention(qk_src: &Nd, v_src: &Nd, cfg: &MrmConfig, temporal: bool, w: &Qkv) -> (Vec<Vec<Vec<Vec<f64>>>>, Nd) {
    let q = proj(qk_src, &w.q);
    let k = proj(qk_src, &w.k);
    let v = proj(v_src, &w.v);
    let (b, n, h, wd) = dims(&q);
    let per = if temporal { cfg.t_l() } else { cfg.c_l() };
    let mut mixed = zeros(b, n, h, wd);
    let mut att = vec![vec![vec![vec![0.0; per]; per]; cfg.heads()]; b];
    for ib in 0..b {
        for l in 0..cfg.heads() {
            for i in 0..per {
                let ci = token_channels(cfg, temporal, l, i);
                let mut scores = vec![0.0; per];
                for (j, s) in scores.iter_mut().enumerate() {
                    let cj = token_channels(cfg, temporal, l, j);
                    for (a, bb) in ci.iter().zip(&cj) {
                        for y in 0..h {
                            for xx in 0..wd {
                                *s += q[ib][*a][y][xx] * k[ib][*bb][y][xx];
                            }
                        }
                    }
                }
                let a = softmax(&scores);
                for j in 0..per {
                    let cj = token_channels(cfg, temporal, l, j);
                    for (dst, src) in ci.iter().zip(&cj) {
                        for y in 0..h {
                            for xx in 0..wd {
                                mixed[ib][*dst][y][xx] += a[j] * v[ib][*src][y][xx];
                            }
                        }
                    }
                }
                att[ib][l][i] = a;
            }
        }
    }
    (att, mixed)
}

pub fn self_attention(x: &Nd, cfg: &MrmConfig, temporal: bool, w: &AttentionWeights) -> Nd {
    let (_, mixed) = attention(x, x, cfg, temporal, &w.qkv);
    let out = pw(&mixed, &w.out);
    if cfg.residual() {
        zip(&out, x, |a, b| a + b)
    } else {
        out
    }
}

/// MSEM composed from the loop kernels: `(F1, mix, gamma, output)`.
pub fn msem_oracle(fe: &Tensor4, fi: &Tensor4, w: &MsemWeights) -> (Tensor4, Tensor4, Tensor4, Tensor4) {
    let (e, i) = (to_nd(fe), to_nd(fi));
    let resid = zip(&e, &up(&down(&e)), |a, b| a - b);
    let s = dw(&dw(&resid, &w.hf[0]), &w.hf[1]);
    let f1 = zip(&zip(&e, &s, |a, b| a * b), &e, |a, b| a + b);
    let mix = dw(&dw(&pw(&cat(&f1, &i), &w.fuse_pw), &w.fuse_dw[0]), &w.fuse_dw[1]);
    let gamma = map(&pw(&mix, &w.gate), sigmoid);
    let f2 = zip(&gamma, &f1, |a, b| a * b);
    let out = pw(&cat(&mix, &f2), &w.out);
    (from_nd(&f1), from_nd(&mix), from_nd(&gamma), from_nd(&out))
}

/// ESEM composed from the loop kernels: `(F_sem, event branch, output)`.
pub fn esem_oracle(fi: &Tensor4, fe: &Tensor4, w: &EsemWeights) -> (Tensor4, Tensor4, Tensor4) {
    let (i, e) = (to_nd(fi), to_nd(fe));
    let enc = proj(&i, &w.encoder);
    let (b, n, h, wd) = dims(&enc);
    let mut sem = enc.clone();
    for ib in 0..b {
        let gap: Vec<f64> = (0..n)
            .map(|c| enc[ib][c].iter().flatten().sum::<f64>() / (h * wd) as f64)
            .collect();
        let red: Vec<f64> = (0..w.ca_reduce.out_channels())
            .map(|o| {
                let z = w.ca_reduce.bias()[o] + (0..n).map(|c| w.ca_reduce.kernel()[o * n + c] * gap[c]).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let rr = red.len();
        for c in 0..n {
            let z = w.ca_expand.bias()[c] + (0..rr).map(|k| w.ca_expand.kernel()[c * rr + k] * red[k]).sum::<f64>();
            let beta = sigmoid(z);
            for y in 0..h {
                for xx in 0..wd {
                    sem[ib][c][y][xx] = beta * enc[ib][c][y][xx];
                }
            }
        }
    }
    let mix = pw(&cat(&sem, &e), &w.fuse);
    let half = w.fuse.out_channels() / 2;
    let sem_half: Nd = mix.iter().map(|bch| bch[..half].to_vec()).collect();
    let ev_half: Nd = mix.iter().map(|bch| bch[half..].to_vec()).collect();
    let ev = self_attention(&ev_half, &w.temporal_cfg, true, &w.temporal);
    let logits = pw(&dw(&sem_half, &w.spatial_dw), &w.spatial_pw);
    let mut sb = sem_half.clone();
    for ib in 0..b {
        for c in 0..half {
            for y in 0..h {
                for xx in 0..wd {
                    sb[ib][c][y][xx] *= sigmoid(logits[ib][0][y][xx]);
                }
            }
        }
    }
    let out = pw(&cat(&ev, &sb), &w.out);
    (from_nd(&sem), from_nd(&ev), from_nd(&out))
}
