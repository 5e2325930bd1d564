use crate::imgcore::{ImageRgb, ScalarMap};

/// Lower bound of the learned gamma range after clamping.
pub const GAMMA_FLOOR: f64 = 0.05;
/// Upper bound of the learned gamma range after clamping.
pub const GAMMA_CEIL: f64 = 20.0;
/// Base clamp before the power law, keeps `ln(base)` finite.
pub const GAMMA_BASE_EPS: f64 = 1e-6;

/// Learnable range parameters: `gamma_min = a exp(b)`, `gamma_max = c exp(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Accumulated gradients for `[a, b, c, d]`.
    pub grad: [f64; 4],
}

impl Default for GammaParams {
    /// Identity mapping: both ends of the range are 1.
    fn default() -> Self {
        Self::new(1.0, 0.0, 1.0, 0.0)
    }
}

impl GammaParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            a,
            b,
            c,
            d,
            grad: [0.0; 4],
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn set_values(&mut self, v: [f64; 4]) {
        [self.a, self.b, self.c, self.d] = v;
    }

    pub fn zero_grad(&mut self) {
        self.grad = [0.0; 4];
    }
}

/// Clamped, ordered gamma range with its Jacobian with respect to `[a, b, c, d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRange {
    pub min: f64,
    pub max: f64,
    d_min: [f64; 4],
    d_max: [f64; 4],
}

impl GammaRange {
    pub fn d_min(&self) -> [f64; 4] {
        self.d_min
    }

    pub fn d_max(&self) -> [f64; 4] {
        self.d_max
    }
}

fn clamp_with_slope(raw: f64, slope: [f64; 4]) -> (f64, [f64; 4]) {
    if raw < GAMMA_FLOOR {
        (GAMMA_FLOOR, [0.0; 4])
    } else if raw > GAMMA_CEIL {
        (GAMMA_CEIL, [0.0; 4])
    } else {
        (raw, slope)
    }
}

pub fn gamma_range(gp: &GammaParams) -> GammaRange {
    let eb = gp.b.exp();
    let ed = gp.d.exp();
    let (lo, d_lo) = clamp_with_slope(gp.a * eb, [eb, gp.a * eb, 0.0, 0.0]);
    let (hi, d_hi) = clamp_with_slope(gp.c * ed, [0.0, 0.0, ed, gp.c * ed]);
    if lo == hi {
        // symmetric subgradient where the two ends cross
        let avg = [0, 1, 2, 3].map(|j| 0.5 * (d_lo[j] + d_hi[j]));
        GammaRange {
            min: lo,
            max: hi,
            d_min: avg,
            d_max: avg,
        }
    } else if lo > hi {
        GammaRange {
            min: hi,
            max: lo,
            d_min: d_hi,
            d_max: d_lo,
        }
    } else {
        GammaRange {
            min: lo,
            max: hi,
            d_min: d_lo,
            d_max: d_hi,
        }
    }
}

/// Linear interpolation of the exponent by brightness rank.
#[inline]
pub fn gamma_of_rank(gamma_min: f64, gamma_max: f64, p: f64) -> f64 {
    gamma_min + p * (gamma_max - gamma_min)
}

/// Raises every channel of `gt` to the rank-interpolated exponent of its pixel.
/// `rank` is the (detached) brightness rank map of `gt`.
pub fn apply_gamma(gt: &ImageRgb, rank: &ScalarMap, gp: &GammaParams) -> ImageRgb {
    apply_gamma_range(gt, rank, &gamma_range(gp))
}

pub(crate) fn apply_gamma_range(gt: &ImageRgb, rank: &ScalarMap, range: &GammaRange) -> ImageRgb {
    debug_assert_eq!(gt.dims(), rank.dims());
    let mut out = gt.clone();
    for (px, &p) in out.data_mut().chunks_exact_mut(3).zip(rank.data()) {
        let g = gamma_of_rank(range.min, range.max, p);
        for v in px {
            *v = v.clamp(GAMMA_BASE_EPS, 1.0).powf(g);
        }
    }
    out
}

/// Gradient of a loss with respect to `[a, b, c, d]` given dL/dI_gm.
///
/// dI_gm/dgamma = I_gm ln(base); dgamma/dgamma_min = 1 - p, dgamma/dgamma_max = p.
pub fn gamma_backward(gt: &ImageRgb, rank: &ScalarMap, range: &GammaRange, i_gm: &ImageRgb, grad_gm: &[f64]) -> [f64; 4] {
    let mut d_lo = 0.0;
    let mut d_hi = 0.0;
    for (i, &p) in rank.data().iter().enumerate() {
        let mut s = 0.0;
        for c in 0..3 {
            let k = i * 3 + c;
            let base = gt.data()[k].clamp(GAMMA_BASE_EPS, 1.0);
            s += grad_gm[k] * i_gm.data()[k] * base.ln();
        }
        d_lo += (1.0 - p) * s;
        d_hi += p * s;
    }
    let dmin = range.d_min();
    let dmax = range.d_max();
    [0, 1, 2, 3].map(|j| d_lo * dmin[j] + d_hi * dmax[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn range_examples() {
        let r = gamma_range(&GammaParams::default());
        assert_eq!((r.min, r.max), (1.0, 1.0));
        let r = gamma_range(&GammaParams::new(0.5, 0.0, 2.0, 0.0));
        assert_eq!((r.min, r.max), (0.5, 2.0));
        let r = gamma_range(&GammaParams::new(1.0, 1.0, 1.0, 0.0));
        assert_eq!(r.min, 1.0);
        assert!((r.max - E).abs() < 1e-15);
        // after the swap the upper end follows a and b
        assert_eq!(r.d_max()[2], 0.0);
        assert!((r.d_max()[1] - E).abs() < 1e-15);
    }

    #[test]
    fn range_is_clamped() {
        let r = gamma_range(&GammaParams::new(-3.0, 0.0, 100.0, 1.0));
        assert_eq!((r.min, r.max), (GAMMA_FLOOR, GAMMA_CEIL));
        assert_eq!(r.d_min(), [0.0; 4]);
        assert_eq!(r.d_max(), [0.0; 4]);
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(gamma_of_rank(0.5, 2.0, 0.0), 0.5);
        assert_eq!(gamma_of_rank(0.5, 2.0, 1.0), 2.0);
        assert_eq!(gamma_of_rank(0.5, 2.0, 0.5), 1.25);
    }

    #[test]
    fn power_law_examples() {
        let rank = ScalarMap::filled(1, 1, 0.5);
        let two = GammaParams::new(2.0, 0.0, 2.0, 0.0);
        let out = apply_gamma(&ImageRgb::filled(1, 1, [0.25, 1.0, 0.0]), &rank, &two);
        assert_eq!(out.get(0, 0)[0], 0.0625);
        assert_eq!(out.get(0, 0)[1], 1.0);
        assert_eq!(out.get(0, 0)[2], GAMMA_BASE_EPS * GAMMA_BASE_EPS);
    }

    #[test]
    fn identity_params_only_clamp() {
        let mut gt = ImageRgb::new(3, 2);
        for (i, v) in gt.data_mut().iter_mut().enumerate() {
            *v = i as f64 / 17.0;
        }
        let rank = crate::imgcore::cdf_rank(&crate::imgcore::luminance(&gt));
        let out = apply_gamma(&gt, &rank, &GammaParams::default());
        assert_eq!(out, gt.map(|v| v.clamp(GAMMA_BASE_EPS, 1.0)));
    }
}
