//! Adaptive illumination adjustment.
//!
//! The target image is gamma-mapped with a per-pixel exponent interpolated
//! by brightness rank inside a learnable per-view range; the rendered image is
//! modulated by a learnable per-view illumination field fused with a small
//! convolutional feature map. Both sides meet in a weighted L1/SSIM loss and
//! every learnable quantity receives an exact reverse-mode gradient.

mod field;
mod gamma;
mod loss;
mod refine;
pub mod state;

pub use field::{fuse, modulate, IlluminationField, FIELD_FLOOR};
pub use gamma::{
    apply_gamma, gamma_backward, gamma_of_rank, gamma_range, GammaParams, GammaRange, GAMMA_BASE_EPS, GAMMA_CEIL,
    GAMMA_FLOOR,
};
pub use loss::{illum_loss, photometric_loss, PhotometricLoss, DEFAULT_LAMBDA};
pub use refine::{
    refine_backward, refine_features, refine_forward, Conv3x3, ConvWeights, RefineRecord, FEATURE_SIZE,
    HIDDEN_CHANNELS, INIT_OUTPUT_BIAS, INIT_WEIGHT_RANGE,
};

use crate::error::{check_dims, Error, Result};
use crate::imgcore::{cdf_rank, luminance, Bilinear, ImageRgb, ScalarMap};

/// Per-view learnable illumination state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewIllum {
    pub gamma: GammaParams,
    pub field: IlluminationField,
}

impl ViewIllum {
    pub fn zero_grad(&mut self) {
        self.gamma.zero_grad();
        self.field.zero_grad();
    }
}

/// Everything produced by one illumination forward pass.
#[derive(Debug, Clone)]
pub struct IllumForward {
    pub i_gm: ImageRgb,
    pub i_map: ImageRgb,
    pub loss: PhotometricLoss,
    pub rank: ScalarMap,
    pub range: GammaRange,
    pub f2: ScalarMap,
    pub f_map: ScalarMap,
    gt: ImageRgb,
    rendered: ImageRgb,
    field: Vec<f64>,
    refine: RefineRecord,
    to_image: Bilinear,
    f_map_resized: Vec<f64>,
}

/// Forward pass: `I_gm` from `gt`, `I_map` from `rendered`, and their loss.
pub fn illum_forward(
    gt: &ImageRgb,
    rendered: &ImageRgb,
    view: &ViewIllum,
    net: &ConvWeights,
    lambda: f64,
) -> Result<IllumForward> {
    check_dims(gt.dims(), rendered.dims())?;
    let rank = cdf_rank(&luminance(gt));
    let range = gamma_range(&view.gamma);
    let i_gm = gamma::apply_gamma_range(gt, &rank, &range);

    let (f2, refine) = refine_forward(rendered, net);
    let f_map = fuse(&view.field, &f2)?;
    let to_image = Bilinear::new(FEATURE_SIZE, FEATURE_SIZE, rendered.width(), rendered.height());
    let f_map_resized = to_image.apply(f_map.data());
    let i_map = field::modulate_resized(&f_map_resized, rendered);
    let loss = illum_loss(&i_map, &i_gm, lambda)?;

    Ok(IllumForward {
        i_gm,
        i_map,
        loss,
        rank,
        range,
        f2,
        f_map,
        gt: gt.clone(),
        rendered: rendered.clone(),
        field: view.field.values.clone(),
        refine,
        to_image,
        f_map_resized,
    })
}

/// Reverse pass for `upstream * loss.scalar`. Gradients for the gamma
/// parameters, the field and the network are accumulated in place; the
/// returned buffer is dL/d(rendered), interleaved RGB.
pub fn illum_backward(fwd: &IllumForward, upstream: f64, view: &mut ViewIllum, net: &mut ConvWeights) -> Vec<f64> {
    let (g_map, g_gm) = fwd.loss.backward(&fwd.i_map, &fwd.i_gm, upstream);

    let g_gamma = gamma_backward(&fwd.gt, &fwd.rank, &fwd.range, &fwd.i_gm, &g_gm);
    for (dst, g) in view.gamma.grad.iter_mut().zip(g_gamma) {
        *dst += g;
    }

    let n_px = fwd.rendered.len_pixels();
    let mut g_rendered = vec![0.0; n_px * 3];
    let mut g_resized = vec![0.0; n_px];
    for j in 0..n_px {
        let r = fwd.f_map_resized[j];
        for c in 0..3 {
            let k = j * 3 + c;
            g_rendered[k] = g_map[k] * r;
            g_resized[j] += g_map[k] * fwd.rendered.data()[k];
        }
    }
    let g_fmap = fwd.to_image.adjoint(&g_resized);
    let mut g_f2 = vec![0.0; g_fmap.len()];
    for (i, g) in g_fmap.iter().enumerate() {
        view.field.grad[i] += g * fwd.f2.data()[i];
        g_f2[i] = g * fwd.field[i];
    }
    let g_conv = refine_backward(&fwd.refine, net, &g_f2);
    g_rendered.iter_mut().zip(g_conv).for_each(|(g, c)| *g += c);
    g_rendered
}

/// Holds at most one forward record so the reverse pass can only run after a
/// matching forward pass.
#[derive(Debug, Default)]
pub struct IllumTape {
    record: Option<IllumForward>,
}

impl IllumTape {
    pub fn forward(
        &mut self,
        gt: &ImageRgb,
        rendered: &ImageRgb,
        view: &ViewIllum,
        net: &ConvWeights,
        lambda: f64,
    ) -> Result<&IllumForward> {
        let fwd = illum_forward(gt, rendered, view, net, lambda)?;
        Ok(self.record.insert(fwd))
    }

    pub fn record(&self) -> Option<&IllumForward> {
        self.record.as_ref()
    }

    /// Consumes the recorded forward pass.
    pub fn backward(&mut self, upstream: f64, view: &mut ViewIllum, net: &mut ConvWeights) -> Result<Vec<f64>> {
        let fwd = self.record.take().ok_or(Error::NoForwardRecord)?;
        Ok(illum_backward(&fwd, upstream, view, net))
    }
}
