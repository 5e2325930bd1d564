//! Windowed SSIM with an analytic reverse pass.
//!
//! The window is an 11x11 Gaussian (sigma 1.5) applied separably with
//! reflection at the borders. Every local statistic is a linear filter of the
//! inputs or their products, so the reverse pass applies the adjoint filter to
//! per-pixel coefficient maps.

use super::buffers::{ImageRgb, ScalarMap};
use crate::error::{check_dims, Result};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

const RADIUS: isize = (SSIM_WINDOW / 2) as isize;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *w = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *w;
    }
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// Mirror an out-of-range index back into `[0, n)` without repeating the edge
/// sample (`-1 -> 1`). Folds repeatedly for windows wider than the image.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &kw) in k.iter().enumerate() {
                acc += kw * row[reflect(x as isize + t as isize - RADIUS, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &kw) in k.iter().enumerate() {
                acc += kw * tmp[reflect(y as isize + t as isize - RADIUS, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn blur_adjoint(grad: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = grad[y * w + x];
            for (t, &kw) in k.iter().enumerate() {
                tmp[reflect(y as isize + t as isize - RADIUS, h) * w + x] += kw * g;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = tmp[y * w + x];
            for (t, &kw) in k.iter().enumerate() {
                out[y * w + reflect(x as isize + t as isize - RADIUS, w)] += kw * g;
            }
        }
    }
    out
}

/// Local statistics of one channel pair.
#[derive(Debug, Clone)]
struct ChannelStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

/// Intermediates kept by [`ssim_forward`] for [`ssim_backward`].
#[derive(Debug, Clone)]
pub struct SsimRecord {
    width: usize,
    height: usize,
    channels: [ChannelStats; 3],
}

/// Per-pixel SSIM averaged over the three channels.
pub fn ssim_map(a: &ImageRgb, b: &ImageRgb) -> Result<ScalarMap> {
    ssim_forward(a, b).map(|(m, _)| m)
}

pub fn ssim_forward(a: &ImageRgb, b: &ImageRgb) -> Result<(ScalarMap, SsimRecord)> {
    check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let k = gaussian_kernel();
    let mut map = vec![0.0; w * h];

    let stats = [0, 1, 2].map(|c| {
        let x = a.channel(c);
        let y = b.channel(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_a = blur(&x, w, h, &k);
        let mu_b = blur(&y, w, h, &k);
        let e_aa = blur(&xx, w, h, &k);
        let e_bb = blur(&yy, w, h, &k);
        let e_ab = blur(&xy, w, h, &k);
        let var_a: Vec<f64> = e_aa.iter().zip(&mu_a).map(|(e, m)| e - m * m).collect();
        let var_b: Vec<f64> = e_bb.iter().zip(&mu_b).map(|(e, m)| e - m * m).collect();
        let cov: Vec<f64> = e_ab
            .iter()
            .zip(mu_a.iter().zip(&mu_b))
            .map(|(e, (ma, mb))| e - ma * mb)
            .collect();
        ChannelStats {
            mu_a,
            mu_b,
            var_a,
            var_b,
            cov,
        }
    });

    for s in &stats {
        for (i, out) in map.iter_mut().enumerate() {
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * s.cov[i] + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (s.var_a[i] + s.var_b[i] + SSIM_C2);
            *out += num / den / 3.0;
        }
    }

    Ok((
        ScalarMap::from_vec(w, h, map)?,
        SsimRecord {
            width: w,
            height: h,
            channels: stats,
        },
    ))
}

/// Reverse pass of the per-pixel SSIM map. `upstream[i]` is dL/dssim(i).
/// Returns interleaved gradients with respect to `a` and `b`.
pub fn ssim_backward(record: &SsimRecord, a: &ImageRgb, b: &ImageRgb, upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (record.width, record.height);
    let n = w * h;
    let k = gaussian_kernel();
    let mut grad_a = vec![0.0; n * 3];
    let mut grad_b = vec![0.0; n * 3];

    for (c, s) in record.channels.iter().enumerate() {
        let mut d_mu_a = vec![0.0; n];
        let mut d_mu_b = vec![0.0; n];
        let mut d_e_aa = vec![0.0; n];
        let mut d_e_bb = vec![0.0; n];
        let mut d_e_ab = vec![0.0; n];
        for i in 0..n {
            let u = upstream[i] / 3.0;
            if u == 0.0 {
                continue;
            }
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            let a1 = 2.0 * ma * mb + SSIM_C1;
            let a2 = 2.0 * s.cov[i] + SSIM_C2;
            let b1 = ma * ma + mb * mb + SSIM_C1;
            let b2 = s.var_a[i] + s.var_b[i] + SSIM_C2;
            let ssim = a1 * a2 / (b1 * b2);

            let ds_dma = 2.0 * mb * a2 / (b1 * b2) - 2.0 * ma * ssim / b1;
            let ds_dmb = 2.0 * ma * a2 / (b1 * b2) - 2.0 * mb * ssim / b1;
            let ds_dvar = -ssim / b2;
            let ds_dcov = 2.0 * a1 / (b1 * b2);

            // var = E[x^2] - mu^2 and cov = E[xy] - mu_a mu_b
            d_mu_a[i] = u * (ds_dma - 2.0 * ma * ds_dvar - mb * ds_dcov);
            d_mu_b[i] = u * (ds_dmb - 2.0 * mb * ds_dvar - ma * ds_dcov);
            d_e_aa[i] = u * ds_dvar;
            d_e_bb[i] = u * ds_dvar;
            d_e_ab[i] = u * ds_dcov;
        }
        let g_mu_a = blur_adjoint(&d_mu_a, w, h, &k);
        let g_mu_b = blur_adjoint(&d_mu_b, w, h, &k);
        let g_aa = blur_adjoint(&d_e_aa, w, h, &k);
        let g_bb = blur_adjoint(&d_e_bb, w, h, &k);
        let g_ab = blur_adjoint(&d_e_ab, w, h, &k);
        for j in 0..n {
            let x = a.data()[j * 3 + c];
            let y = b.data()[j * 3 + c];
            grad_a[j * 3 + c] = g_mu_a[j] + 2.0 * x * g_aa[j] + y * g_ab[j];
            grad_b[j * 3 + c] = g_mu_b[j] + 2.0 * y * g_bb[j] + x * g_ab[j];
        }
    }
    (grad_a, grad_b)
}
