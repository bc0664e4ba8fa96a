//! Direct-loop reference implementations used as test oracles.
#![allow(dead_code)]

/// Mean squared error by a nested row/column loop, then `10 log10(peak^2 / mse)`.
pub fn psnr_loop(a: &[Vec<f64>], b: &[Vec<f64>], peak: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    10.0 * (peak * peak / (sum / n as f64)).log10()
}

/// SSIM with an explicit 2-D Gaussian window evaluated at every fully
/// contained position.
pub fn ssim_loop(a: &[Vec<f64>], b: &[Vec<f64>], peak: f64) -> f64 {
    const K: usize = 11;
    let sigma = 1.5f64;
    let c = (K as f64 - 1.0) / 2.0;
    let mut win = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let (h, w) = (a.len(), a[0].len());
    let mut acc = 0.0;
    let mut count = 0usize;
    for y in 0..=h - K {
        for x in 0..=w - K {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    let g = win[i][j] / total;
                    ma += g * a[y + i][x + j];
                    mb += g * b[y + i][x + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    let g = win[i][j] / total;
                    let (da, db) = (a[y + i][x + j] - ma, b[y + i][x + j] - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// Zero-noise reference-crossing simulator, one pixel at a time: the
/// reference steps by one threshold per emitted event. Events are returned
/// as `(t, x, y, polarity)` sorted by time, then row, then column.
pub fn dvs_loop(frames: &[Vec<Vec<f64>>], ts: &[u64], theta: f64, floor: f64) -> Vec<(u64, u32, u32, i8)> {
    let (h, w) = (frames[0].len(), frames[0][0].len());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut reference = (frames[0][y][x] + floor).ln();
            for (k, f) in frames.iter().enumerate().skip(1) {
                let level = (f[y][x] + floor).ln();
                let mut emitted = 0i64;
                let residual = level - reference;
                let steps = residual.abs() / theta;
                while (emitted + 1) as f64 <= steps {
                    emitted += 1;
                    out.push((ts[k], x as u32, y as u32, if residual > 0.0 { 1 } else { -1 }));
                }
                reference += residual.signum() * emitted as f64 * theta;
            }
        }
    }
    out.sort_by_key(|e| (e.0, e.2, e.1));
    out
}

/// `P(|Z| >= theta / sigma)` for standard normal `Z`.
pub fn gaussian_fpr(theta: f64, sigma: f64) -> f64 {
    statrs::function::erf::erfc(theta / (sigma * std::f64::consts::SQRT_2))
}

/// Four 8x8 frames brightening along x at a row-dependent rate.
pub fn ramp_frames() -> (Vec<Vec<Vec<f64>>>, Vec<u64>) {
    let frames = (0..4)
        .map(|k| {
            (0..8)
                .map(|y| (0..8).map(|x| 0.04 + 0.06 * k as f64 * (x as f64 + 1.0) * (1.0 + 0.1 * y as f64)).collect())
                .collect()
        })
        .collect();
    (frames, vec![0, 5_000, 10_000, 15_000])
}
