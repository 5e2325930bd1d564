use crate::error::{check_dims, Error, Result};
use crate::imgcore::{l1_map, l1_map_backward, ssim_backward, ssim_forward, ImageRgb, ScalarMap, SsimRecord};

/// Default SSIM balance.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Weighted L1 + (1 - SSIM) loss between two images, kept with the
/// intermediates needed for its reverse pass.
#[derive(Debug, Clone)]
pub struct PhotometricLoss {
    /// Mean of `per_pixel`.
    pub scalar: f64,
    /// `(1 - lambda) l1(i) + lambda (1 - ssim(i))`.
    pub per_pixel: ScalarMap,
    pub lambda: f64,
    ssim: SsimRecord,
}

/// Photometric loss of `pred` against `target`.
pub fn photometric_loss(pred: &ImageRgb, target: &ImageRgb, lambda: f64) -> Result<PhotometricLoss> {
    check_dims(pred.dims(), target.dims())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let l1 = l1_map(pred, target)?;
    let (ssim, record) = ssim_forward(pred, target)?;
    let data: Vec<f64> = l1
        .data()
        .iter()
        .zip(ssim.data())
        .map(|(l, s)| (1.0 - lambda) * l + lambda * (1.0 - s))
        .collect();
    let scalar = data.iter().sum::<f64>() / data.len() as f64;
    Ok(PhotometricLoss {
        scalar,
        per_pixel: ScalarMap::from_vec(pred.width(), pred.height(), data)?,
        lambda,
        ssim: record,
    })
}

/// Illumination loss between the modulated render and the gamma-mapped target.
pub fn illum_loss(i_map: &ImageRgb, i_gm: &ImageRgb, lambda: f64) -> Result<PhotometricLoss> {
    photometric_loss(i_map, i_gm, lambda)
}

impl PhotometricLoss {
    /// Gradients of `upstream * scalar` with respect to `pred` and `target`.
    pub fn backward(&self, pred: &ImageRgb, target: &ImageRgb, upstream: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.per_pixel.data().len();
        let u = upstream / n as f64;
        let g_l1 = vec![u * (1.0 - self.lambda); n];
        let g_ssim = vec![-u * self.lambda; n];
        let mut g_pred = l1_map_backward(pred, target, &g_l1);
        let mut g_target: Vec<f64> = g_pred.iter().map(|g| -g).collect();
        if self.lambda != 0.0 {
            let (sa, sb) = ssim_backward(&self.ssim, pred, target, &g_ssim);
            g_pred.iter_mut().zip(sa).for_each(|(g, s)| *g += s);
            g_target.iter_mut().zip(sb).for_each(|(g, s)| *g += s);
        }
        (g_pred, g_target)
    }
}
