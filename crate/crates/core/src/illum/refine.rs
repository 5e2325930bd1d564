//! Two-layer 3x3 convolutional refinement producing the 224x224 illumination
//! weight map from the rendered image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgcore::{Bilinear, ImageRgb, ScalarMap};

/// Side length of the feature map and of the illumination field.
pub const FEATURE_SIZE: usize = 224;
/// Output channels of the first convolution.
pub const HIDDEN_CHANNELS: usize = 64;
/// Half-width of the uniform initialization range of the convolution weights.
pub const INIT_WEIGHT_RANGE: f64 = 0.05;
/// Initial bias of the output convolution, so the refinement starts close to
/// a multiplicative identity.
pub const INIT_OUTPUT_BIAS: f64 = 1.0;

/// 3x3 convolution, stride 1, zero padding 1. Weights are laid out
/// `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
            grad_weight: vec![0.0; out_channels * in_channels * 9],
            grad_bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * 3 + ky) * 3 + kx
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|g| *g = 0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Planar input `[in][h][w]` to planar output `[out][h][w]`.
    pub fn forward(&self, input: &[f64], w: usize, h: usize) -> Vec<f64> {
        let plane = w * h;
        let (in_c, out_c) = (self.in_channels, self.out_channels);
        let mut out = Vec::with_capacity(out_c * plane);
        for o in 0..out_c {
            out.extend(std::iter::repeat_n(self.bias[o], plane));
        }
        if in_c <= out_c {
            let col = im2col(input, in_c, w, h);
            gemm(out_c, in_c * 9, plane, &self.weight, false, &col, false, &mut out);
        } else {
            let taps = self.tap_major();
            let mut y = vec![0.0; out_c * 9 * plane];
            gemm(out_c * 9, in_c, plane, &taps, false, input, false, &mut y);
            for o in 0..out_c {
                let dst = &mut out[o * plane..(o + 1) * plane];
                for (k, (dy, dx)) in TAPS.iter().enumerate() {
                    let src = &y[(o * 9 + k) * plane..(o * 9 + k + 1) * plane];
                    shift_axpy(dst, src, w, h, *dy, *dx, 1.0);
                }
            }
        }
        out
    }

    /// Accumulates weight and bias gradients and returns the input gradient
    /// when `need_input` is set.
    pub fn backward(&mut self, input: &[f64], grad_out: &[f64], w: usize, h: usize, need_input: bool) -> Option<Vec<f64>> {
        let plane = w * h;
        let (in_c, out_c) = (self.in_channels, self.out_channels);
        for o in 0..out_c {
            self.grad_bias[o] += grad_out[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
        if in_c <= out_c {
            let col = im2col(input, in_c, w, h);
            gemm(out_c, plane, in_c * 9, grad_out, false, &col, true, &mut self.grad_weight);
            if !need_input {
                return None;
            }
            let mut g_col = vec![0.0; in_c * 9 * plane];
            gemm(in_c * 9, out_c, plane, &self.weight, true, grad_out, false, &mut g_col);
            let mut grad_in = vec![0.0; in_c * plane];
            for i in 0..in_c {
                let dst = &mut grad_in[i * plane..(i + 1) * plane];
                for (k, (dy, dx)) in TAPS.iter().enumerate() {
                    let src = &g_col[(i * 9 + k) * plane..(i * 9 + k + 1) * plane];
                    shift_axpy(dst, src, w, h, -dy, -dx, 1.0);
                }
            }
            Some(grad_in)
        } else {
            // gradient of each output channel pulled back through each tap
            let mut g_col = vec![0.0; out_c * 9 * plane];
            for o in 0..out_c {
                let g = &grad_out[o * plane..(o + 1) * plane];
                for (k, (dy, dx)) in TAPS.iter().enumerate() {
                    let dst = &mut g_col[(o * 9 + k) * plane..(o * 9 + k + 1) * plane];
                    shift_axpy(dst, g, w, h, -dy, -dx, 1.0);
                }
            }
            let mut g_taps = vec![0.0; out_c * 9 * in_c];
            gemm(out_c * 9, plane, in_c, &g_col, false, input, true, &mut g_taps);
            for o in 0..out_c {
                for i in 0..in_c {
                    for k in 0..9 {
                        self.grad_weight[(o * in_c + i) * 9 + k] += g_taps[(o * 9 + k) * in_c + i];
                    }
                }
            }
            if !need_input {
                return None;
            }
            let taps = self.tap_major();
            let mut grad_in = vec![0.0; in_c * plane];
            gemm(in_c, out_c * 9, plane, &taps, true, &g_col, false, &mut grad_in);
            Some(grad_in)
        }
    }

    /// Weights rearranged to `[out][ky][kx][in]`.
    fn tap_major(&self) -> Vec<f64> {
        let in_c = self.in_channels;
        let mut t = vec![0.0; self.weight.len()];
        for o in 0..self.out_channels {
            for i in 0..in_c {
                for k in 0..9 {
                    t[(o * 9 + k) * in_c + i] = self.weight[(o * in_c + i) * 9 + k];
                }
            }
        }
        t
    }
}

/// Kernel offsets `(dy, dx)` in `[ky][kx]` order.
const TAPS: [(isize, isize); 9] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Rows `[in][ky][kx]` holding each input plane shifted by each tap.
fn im2col(input: &[f64], in_c: usize, w: usize, h: usize) -> Vec<f64> {
    let plane = w * h;
    let mut col = vec![0.0; in_c * 9 * plane];
    for i in 0..in_c {
        let src = &input[i * plane..(i + 1) * plane];
        for (k, (dy, dx)) in TAPS.iter().enumerate() {
            shift_axpy(&mut col[(i * 9 + k) * plane..(i * 9 + k + 1) * plane], src, w, h, *dy, *dx, 1.0);
        }
    }
    col
}

/// `c += op(a) op(b)` for row-major `a` (`m x k`, or `k x m` when
/// transposed) and `b` (`k x n`, or `n x k` when transposed).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides address exactly the asserted extents of each slice.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 1.0, c.as_mut_ptr(), n as isize, 1);
    }
}

/// `dst[y][x] += a * src[y + dy][x + dx]` over in-bounds sites.
#[inline]
fn shift_axpy(dst: &mut [f64], src: &[f64], w: usize, h: usize, dy: isize, dx: isize, a: f64) {
    let (x0, x1) = shifted_range(w, dx);
    let (y0, y1) = shifted_range(h, dy);
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
        for (o, v) in d.iter_mut().zip(s) {
            *o += a * v;
        }
    }
}

#[inline]
fn shifted_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(lo as isize) as usize;
    (lo, hi)
}

/// The refinement network: `ReLU(conv(3 -> 64))` then `ReLU(conv(64 -> 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub layer1: Conv3x3,
    pub layer2: Conv3x3,
}

impl ConvWeights {
    pub fn zeros() -> Self {
        Self {
            layer1: Conv3x3::zeros(3, HIDDEN_CHANNELS),
            layer2: Conv3x3::zeros(HIDDEN_CHANNELS, 1),
        }
    }

    /// Weights uniform in `[-0.05, 0.05]`, hidden biases 0, output bias
    /// [`INIT_OUTPUT_BIAS`].
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros();
        for w in net.layer1.weight.iter_mut().chain(net.layer2.weight.iter_mut()) {
            *w = rng.random_range(-INIT_WEIGHT_RANGE..=INIT_WEIGHT_RANGE);
        }
        net.layer2.bias[0] = INIT_OUTPUT_BIAS;
        net
    }

    pub fn zero_grad(&mut self) {
        self.layer1.zero_grad();
        self.layer2.zero_grad();
    }

    pub fn param_count(&self) -> usize {
        self.layer1.weight.len() + self.layer1.bias.len() + self.layer2.weight.len() + self.layer2.bias.len()
    }
}

/// Intermediates of one refinement forward pass.
#[derive(Debug, Clone)]
pub struct RefineRecord {
    resize: Bilinear,
    input: Vec<f64>,
    hidden: Vec<f64>,
    pre_out: Vec<f64>,
}

/// Runs the refinement network on `rendered` (resized to 224x224).
pub fn refine_features(rendered: &ImageRgb, net: &ConvWeights) -> ScalarMap {
    refine_forward(rendered, net).0
}

pub fn refine_forward(rendered: &ImageRgb, net: &ConvWeights) -> (ScalarMap, RefineRecord) {
    let n = FEATURE_SIZE;
    let resize = Bilinear::new(rendered.width(), rendered.height(), n, n);
    let mut input = Vec::with_capacity(3 * n * n);
    for c in 0..3 {
        input.extend(resize.apply(&rendered.channel(c)));
    }
    let mut hidden = net.layer1.forward(&input, n, n);
    hidden.iter_mut().for_each(|v| *v = v.max(0.0));
    let pre_out = net.layer2.forward(&hidden, n, n);
    let f2 = pre_out.iter().map(|v| v.max(0.0)).collect();
    (
        ScalarMap::from_vec(n, n, f2).expect("feature map size"),
        RefineRecord {
            resize,
            input,
            hidden,
            pre_out,
        },
    )
}

/// Accumulates weight gradients into `net` and returns dL/d(rendered) as an
/// interleaved RGB buffer.
pub fn refine_backward(record: &RefineRecord, net: &mut ConvWeights, grad_f2: &[f64]) -> Vec<f64> {
    let n = FEATURE_SIZE;
    let g_pre_out: Vec<f64> = grad_f2
        .iter()
        .zip(&record.pre_out)
        .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
        .collect();
    let mut g_hidden = net
        .layer2
        .backward(&record.hidden, &g_pre_out, n, n, true)
        .expect("input gradient requested");
    for (g, h) in g_hidden.iter_mut().zip(&record.hidden) {
        if *h <= 0.0 {
            *g = 0.0;
        }
    }
    let g_input = net
        .layer1
        .backward(&record.input, &g_hidden, n, n, true)
        .expect("input gradient requested");

    let (w, h) = record.resize.src_dims();
    let mut out = vec![0.0; w * h * 3];
    for c in 0..3 {
        let g = record.resize.adjoint(&g_input[c * n * n..(c + 1) * n * n]);
        for (j, v) in g.into_iter().enumerate() {
            out[j * 3 + c] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_gives_zero() {
        let img = ImageRgb::filled(8, 8, [0.4, 0.2, 0.9]);
        let f2 = refine_features(&img, &ConvWeights::zeros());
        assert_eq!(f2.dims(), (FEATURE_SIZE, FEATURE_SIZE));
        assert!(f2.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_lifting_passes_constant_through() {
        let mut net = ConvWeights::zeros();
        for o in 0..HIDDEN_CHANNELS {
            let idx = net.layer1.widx(o, o % 3, 1, 1);
            net.layer1.weight[idx] = 1.0;
        }
        let idx = net.layer2.widx(0, 0, 1, 1);
        net.layer2.weight[idx] = 1.0;
        let f2 = refine_features(&ImageRgb::filled(8, 8, [0.3; 3]), &net);
        for y in 1..FEATURE_SIZE - 1 {
            for x in 1..FEATURE_SIZE - 1 {
                assert!((f2.get(x, y) - 0.3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let mut net = ConvWeights::zeros();
        net.layer2.bias[0] = -0.5;
        let f2 = refine_features(&ImageRgb::filled(4, 4, [1.0; 3]), &net);
        assert!(f2.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_padding_at_borders() {
        // a 3x3 box filter over a constant image sees fewer taps at the edge
        let mut c = Conv3x3::zeros(1, 1);
        c.weight.iter_mut().for_each(|w| *w = 1.0);
        let out = c.forward(&[1.0; 16], 4, 4);
        assert_eq!(out[0], 4.0);
        assert_eq!(out[1], 6.0);
        assert_eq!(out[5], 9.0);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        check_conv_backward(2, 3);
        check_conv_backward(3, 2);
    }

    fn test_conv(in_c: usize, out_c: usize) -> Conv3x3 {
        let mut c = Conv3x3::zeros(in_c, out_c);
        for (k, v) in c.weight.iter_mut().enumerate() {
            *v = ((k * 13) % 7) as f64 / 7.0 - 0.4;
        }
        c.bias = (0..out_c).map(|o| 0.1 * o as f64 - 0.2).collect();
        c
    }

    #[test]
    fn forward_matches_direct_sum() {
        let (w, h) = (6, 5);
        for (in_c, out_c) in [(2, 3), (3, 2)] {
            let c = test_conv(in_c, out_c);
            let input: Vec<f64> = (0..in_c * w * h).map(|k| ((k * 31) % 13) as f64 / 13.0).collect();
            let out = c.forward(&input, w, h);
            for o in 0..out_c {
                for y in 0..h {
                    for x in 0..w {
                        let mut v = c.bias[o];
                        for i in 0..in_c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                    if (0..h as isize).contains(&sy) && (0..w as isize).contains(&sx) {
                                        v += c.weight[c.widx(o, i, ky, kx)] * input[(i * h + sy as usize) * w + sx as usize];
                                    }
                                }
                            }
                        }
                        assert!((out[(o * h + y) * w + x] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }

    fn check_conv_backward(in_c: usize, out_c: usize) {
        let (w, h) = (5, 4);
        let c = test_conv(in_c, out_c);
        let input: Vec<f64> = (0..in_c * w * h).map(|k| ((k * 29) % 11) as f64 / 11.0).collect();
        let weights: Vec<f64> = (0..out_c * w * h).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
        let loss = |c: &Conv3x3, inp: &[f64]| -> f64 {
            c.forward(inp, w, h).iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut cc = c.clone();
        let gin = cc.backward(&input, &weights, w, h, true).unwrap();
        let eps = 1e-6;
        for k in 0..c.weight.len() {
            let mut p = c.clone();
            p.weight[k] += eps;
            let mut m = c.clone();
            m.weight[k] -= eps;
            let fd = (loss(&p, &input) - loss(&m, &input)) / (2.0 * eps);
            assert!((fd - cc.grad_weight[k]).abs() < 1e-6, "weight {k}");
        }
        for k in 0..input.len() {
            let mut p = input.clone();
            p[k] += eps;
            let mut m = input.clone();
            m[k] -= eps;
            let fd = (loss(&c, &p) - loss(&c, &m)) / (2.0 * eps);
            assert!((fd - gin[k]).abs() < 1e-6, "input {k}");
        }
        let total: f64 = weights.chunks(w * h).next().unwrap().iter().sum();
        assert!((cc.grad_bias[0] - total).abs() < 1e-12);
    }
}
