//! Normal compensation: pixels whose illumination loss stays high are handed
//! to a reference-normal supervisor, a gradient-consistency term keeps the
//! predicted normal field locally coherent, and all terms meet in one
//! weighted objective.

mod gradient;

pub use gradient::{gradient_loss, gradient_loss_backward, normal_gradient, GradientField, GradientLoss};

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::imgcore::{sign, ImageRgb, NormalMap, ScalarMap};
use crate::splat::Camera;

/// Loss balance, gate threshold and total-objective weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// SSIM share of the photometric loss.
    pub lambda: f64,
    /// Per-pixel illumination loss above which reference normals supervise.
    pub threshold: f64,
    pub illum: f64,
    pub normal: f64,
    pub gradient: f64,
    pub mvs: f64,
    /// Restrict the gradient-consistency term to gated pixels.
    pub gate_gradient: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            threshold: 0.1,
            illum: 1.0,
            normal: 0.15,
            gradient: 0.0015,
            mvs: 0.03,
            gate_gradient: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        for (name, v) in [
            ("threshold", self.threshold),
            ("illum", self.illum),
            ("normal", self.normal),
            ("gradient", self.gradient),
            ("mvs", self.mvs),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("weight {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-pixel supervision mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl GateMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask of {} bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }
}

/// Marks pixels whose loss strictly exceeds `threshold`.
pub fn gate(per_pixel_loss: &ScalarMap, threshold: f64) -> GateMask {
    GateMask {
        width: per_pixel_loss.width(),
        height: per_pixel_loss.height(),
        bits: per_pixel_loss.data().iter().map(|&l| l > threshold).collect(),
    }
}

/// Masked reference-normal loss with its pixel tallies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLoss {
    pub value: f64,
    /// Gated pixels valid in both maps.
    pub tested: usize,
    /// Gated pixels skipped because either map was invalid there.
    pub skipped: usize,
}

fn normal_operands(pred: &NormalMap, reference: &NormalMap, mask: &GateMask) -> Result<()> {
    check_dims(pred.dims(), reference.dims())?;
    check_dims(pred.dims(), mask.dims())
}

/// Mean L1 distance between predicted and reference normals over gated pixels.
pub fn normal_loss(pred: &NormalMap, reference: &NormalMap, mask: &GateMask) -> Result<NormalLoss> {
    normal_operands(pred, reference, mask)?;
    let (mut sum, mut tested, mut skipped) = (0.0, 0, 0);
    for i in 0..mask.bits.len() {
        if !mask.bits[i] {
            continue;
        }
        if !(pred.validity()[i] && reference.validity()[i]) {
            skipped += 1;
            continue;
        }
        let (p, r) = (pred.data()[i], reference.data()[i]);
        sum += (p[0] - r[0]).abs() + (p[1] - r[1]).abs() + (p[2] - r[2]).abs();
        tested += 1;
    }
    let value = if tested == 0 { 0.0 } else { sum / tested as f64 };
    Ok(NormalLoss { value, tested, skipped })
}

/// Gradient of `upstream * normal_loss` with respect to the predicted normals.
pub fn normal_loss_backward(
    pred: &NormalMap,
    reference: &NormalMap,
    mask: &GateMask,
    upstream: f64,
) -> Result<Vec<[f64; 3]>> {
    let loss = normal_loss(pred, reference, mask)?;
    let mut grad = vec![[0.0; 3]; mask.bits.len()];
    if loss.tested == 0 {
        return Ok(grad);
    }
    let u = upstream / loss.tested as f64;
    for (i, g) in grad.iter_mut().enumerate() {
        if mask.bits[i] && pred.validity()[i] && reference.validity()[i] {
            let (p, r) = (pred.data()[i], reference.data()[i]);
            for c in 0..3 {
                g[c] = u * sign(p[c] - r[c]);
            }
        }
    }
    Ok(grad)
}

/// Weighted total objective. Components must be finite and non-negative.
pub fn total_loss(l_illum: f64, l_normal: f64, l_gradient: f64, l_mvs: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [
        ("illum", l_illum),
        ("normal", l_normal),
        ("gradient", l_gradient),
        ("mvs", l_mvs),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss")));
        }
        if v < 0.0 {
            return Err(Error::NegativeLoss { name, value: v });
        }
    }
    Ok(w.illum * l_illum + w.normal * l_normal + w.gradient * l_gradient + w.mvs * l_mvs)
}

/// Forward record of both normal-compensation terms.
#[derive(Debug, Clone)]
pub struct NormalCompForward {
    pub mask: GateMask,
    pub normal: NormalLoss,
    pub gradient: GradientLoss,
    pred: NormalMap,
    reference: NormalMap,
    gradient_mask: Option<GateMask>,
}

/// Gates `per_pixel_loss` and evaluates both normal terms.
pub fn normal_comp_forward(
    per_pixel_loss: &ScalarMap,
    pred: &NormalMap,
    reference: &NormalMap,
    weights: &LossWeights,
) -> Result<NormalCompForward> {
    if per_pixel_loss.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("per-pixel illumination loss".into()));
    }
    let mask = gate(per_pixel_loss, weights.threshold);
    let normal = normal_loss(pred, reference, &mask)?;
    let gradient_mask = weights.gate_gradient.then(|| mask.clone());
    let gradient = gradient_loss(pred, reference, gradient_mask.as_ref())?;
    Ok(NormalCompForward {
        mask,
        normal,
        gradient,
        pred: pred.clone(),
        reference: reference.clone(),
        gradient_mask,
    })
}

/// Gradient over the predicted normal map of
/// `w_normal * normal_loss + w_gradient * gradient_loss`.
pub fn normal_comp_backward(fwd: &NormalCompForward, w_normal: f64, w_gradient: f64) -> Vec<[f64; 3]> {
    let mut grad = normal_loss_backward(&fwd.pred, &fwd.reference, &fwd.mask, w_normal).expect("dims checked in forward");
    let g2 = gradient_loss_backward(&fwd.pred, &fwd.reference, fwd.gradient_mask.as_ref(), w_gradient)
        .expect("dims checked in forward");
    for (a, b) in grad.iter_mut().zip(g2) {
        for c in 0..3 {
            a[c] += b[c];
        }
    }
    grad
}

/// Source of per-pixel reference normals (camera space) for a view.
pub trait ReferenceNormalProvider {
    /// `image` is the observed view; analytic oracles may ignore it.
    fn reference_normals(&self, view: usize, cam: &Camera, image: &ImageRgb) -> Result<NormalMap>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map1(n: [f64; 3]) -> NormalMap {
        NormalMap::from_raw(1, 1, vec![n], vec![true]).unwrap()
    }

    #[test]
    fn gate_examples() {
        let zero = ScalarMap::new(4, 4);
        assert_eq!(gate(&zero, 0.1).count(), 0);
        let exact = ScalarMap::filled(2, 2, 0.1);
        assert_eq!(gate(&exact, 0.1).count(), 0);
        let m = ScalarMap::from_vec(2, 1, vec![0.05, 0.2]).unwrap();
        assert_eq!(gate(&m, 0.1).bits(), &[false, true]);
    }

    #[test]
    fn normal_loss_examples() {
        let full = GateMask::from_bits(1, 1, vec![true]).unwrap();
        let l = normal_loss(&map1([1.0, 0.0, 0.0]), &map1([0.0, 1.0, 0.0]), &full).unwrap();
        assert_eq!(l.value, 2.0);
        assert_eq!(l.tested, 1);
        let same = normal_loss(&map1([0.0, 0.6, 0.8]), &map1([0.0, 0.6, 0.8]), &full).unwrap();
        assert_eq!(same.value, 0.0);
        let empty = GateMask::empty(1, 1);
        assert_eq!(normal_loss(&map1([1.0, 0.0, 0.0]), &map1([0.0, 1.0, 0.0]), &empty).unwrap().value, 0.0);
    }

    #[test]
    fn invalid_gated_pixels_are_tallied() {
        let pred = NormalMap::from_raw(2, 1, vec![[0.0, 0.0, 1.0]; 2], vec![true, false]).unwrap();
        let reference = NormalMap::from_raw(2, 1, vec![[1.0, 0.0, 0.0]; 2], vec![true, true]).unwrap();
        let mask = GateMask::from_bits(2, 1, vec![true, true]).unwrap();
        let l = normal_loss(&pred, &reference, &mask).unwrap();
        assert_eq!((l.tested, l.skipped), (1, 1));
        assert_eq!(l.value, 2.0);
    }

    #[test]
    fn ungated_pixels_get_no_gradient() {
        let pred = NormalMap::from_raw(2, 1, vec![[0.0, 0.0, 1.0]; 2], vec![true; 2]).unwrap();
        let reference = NormalMap::from_raw(2, 1, vec![[1.0, 0.0, 0.0]; 2], vec![true; 2]).unwrap();
        let mask = GateMask::from_bits(2, 1, vec![false, true]).unwrap();
        let g = normal_loss_backward(&pred, &reference, &mask, 1.0).unwrap();
        assert_eq!(g[0], [0.0; 3]);
        assert_eq!(g[1], [-1.0, 0.0, 1.0]);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(1.0, 0.0, 0.0, 0.0, &w).unwrap(), 1.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!((total_loss(0.5, 0.2, 0.1, 0.3, &w).unwrap() - 0.53915).abs() < 1e-15);
        assert!(matches!(
            total_loss(0.5, -0.1, 0.0, 0.0, &w),
            Err(Error::NegativeLoss { name: "normal", .. })
        ));
        assert!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &w).is_err());
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            normal: -1.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossWeights {
            lambda: 1.2,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }
}
