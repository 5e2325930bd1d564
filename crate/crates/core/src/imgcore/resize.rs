/// Separable bilinear resampling with half-pixel centres (no corner
/// alignment), plus its adjoint for reverse passes.
#[derive(Debug, Clone)]
pub struct Bilinear {
    src: (usize, usize),
    dst: (usize, usize),
    xs: Vec<Tap>,
    ys: Vec<Tap>,
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    t: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            Tap { i0, i1, t: s - i0 as f64 }
        })
        .collect()
}

/// `a + t (b - a)`: reproduces constants exactly.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl Bilinear {
    pub fn new(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Self {
        Self {
            src: (src_w, src_h),
            dst: (dst_w, dst_h),
            xs: taps(src_w, dst_w),
            ys: taps(src_h, dst_h),
        }
    }

    pub fn src_dims(&self) -> (usize, usize) {
        self.src
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        self.dst
    }

    /// Resamples one planar channel.
    pub fn apply(&self, plane: &[f64]) -> Vec<f64> {
        let (sw, _) = self.src;
        let (dw, dh) = self.dst;
        let mut out = Vec::with_capacity(dw * dh);
        for ty in &self.ys {
            let r0 = &plane[ty.i0 * sw..(ty.i0 + 1) * sw];
            let r1 = &plane[ty.i1 * sw..(ty.i1 + 1) * sw];
            for tx in &self.xs {
                let top = lerp(r0[tx.i0], r0[tx.i1], tx.t);
                let bot = lerp(r1[tx.i0], r1[tx.i1], tx.t);
                out.push(lerp(top, bot, ty.t));
            }
        }
        out
    }

    /// Adjoint of [`Bilinear::apply`]: scatters a destination-sized gradient
    /// back onto the source grid.
    pub fn adjoint(&self, grad: &[f64]) -> Vec<f64> {
        let (sw, sh) = self.src;
        let dw = self.dst.0;
        let mut out = vec![0.0; sw * sh];
        for (y, ty) in self.ys.iter().enumerate() {
            for (x, tx) in self.xs.iter().enumerate() {
                let g = grad[y * dw + x];
                if g == 0.0 {
                    continue;
                }
                let g0 = g * (1.0 - ty.t);
                let g1 = g * ty.t;
                out[ty.i0 * sw + tx.i0] += g0 * (1.0 - tx.t);
                out[ty.i0 * sw + tx.i1] += g0 * tx.t;
                out[ty.i1 * sw + tx.i0] += g1 * (1.0 - tx.t);
                out[ty.i1 * sw + tx.i1] += g1 * tx.t;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_preserved() {
        let r = Bilinear::new(5, 3, 11, 7);
        assert!(r.apply(&[0.3; 15]).iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let d = Bilinear::new(224, 224, 64, 48);
        assert!(d.apply(&vec![2.0; 224 * 224]).iter().all(|&v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn same_size_is_identity() {
        let src: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert_eq!(Bilinear::new(4, 3, 4, 3).apply(&src), src);
    }

    #[test]
    fn adjoint_identity() {
        // <A x, y> == <x, A^T y>
        let r = Bilinear::new(6, 5, 13, 4);
        let x: Vec<f64> = (0..30).map(|i| ((i * 17) % 7) as f64 - 3.0).collect();
        let y: Vec<f64> = (0..52).map(|i| ((i * 5) % 11) as f64 * 0.1).collect();
        let ax = r.apply(&x);
        let aty = r.adjoint(&y);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
