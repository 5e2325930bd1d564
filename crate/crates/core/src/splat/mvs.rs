use nalgebra::Vector3;

use super::camera::Camera;
use super::project::Z_NEAR;
use super::raster::{RenderOutput, NORMAL_ALPHA};
use crate::error::{check_dims, Result};
use crate::imgcore::sign;

/// Relative depth gap above which a reprojected pixel counts as occluded.
pub const OCCLUSION_GAP: f64 = 0.2;

/// Depth-reprojection consistency between two views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvsLoss {
    pub value: f64,
    /// Pixels that reprojected onto valid coverage and passed the gap test.
    pub tested: usize,
    /// Pixels dropped by the occlusion test.
    pub rejected: usize,
    /// Pixels whose surface normal faces away from the second camera.
    pub backfacing: usize,
    /// True when no pixel of the first view could be tested.
    pub uninformative: bool,
}

/// Gradient of the consistency loss on one view's depth and alpha channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrad {
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl DepthGrad {
    fn zeros(n: usize) -> Self {
        Self {
            depth: vec![0.0; n],
            alpha: vec![0.0; n],
        }
    }
}

/// Normalized depth `depth / alpha` where the pixel is covered.
fn surface_depth(out: &RenderOutput, i: usize) -> Option<f64> {
    let a = out.alpha.data()[i];
    let d = out.depth.data()[i];
    (a > NORMAL_ALPHA && d > 0.0).then(|| d / a)
}

struct Pass<'a> {
    a: &'a RenderOutput,
    cam_a: &'a Camera,
    b: &'a RenderOutput,
    cam_b: &'a Camera,
}

impl Pass<'_> {
    fn run(&self, mut grads: Option<(&mut DepthGrad, &mut DepthGrad)>) -> MvsLoss {
        let (wa, ha) = (self.cam_a.width, self.cam_a.height);
        let (wb, hb) = (self.cam_b.width, self.cam_b.height);
        let rel_r = self.cam_b.rotation * self.cam_a.rotation.transpose();
        let rel_t = self.cam_b.translation - rel_r * self.cam_a.translation;
        let (fx, fy) = (self.cam_b.fx, self.cam_b.fy);

        let (mut sum, mut tested, mut rejected, mut backfacing) = (0.0, 0usize, 0usize, 0usize);
        for y in 0..ha {
            for x in 0..wa {
                let ia = y * wa + x;
                let Some(za) = surface_depth(self.a, ia) else { continue };
                let k = rel_r * self.cam_a.pixel_ray(x, y);
                let pb = k * za + rel_t;
                if !(pb.z > Z_NEAR) {
                    continue;
                }
                if let Some(n) = self.a.normal.get(x, y) {
                    if (rel_r * Vector3::from(n)).dot(&pb) > 0.0 {
                        backfacing += 1;
                        continue;
                    }
                }
                let (u, v) = self.cam_b.project(&pb);
                // sample grid is offset by half a pixel from pixel centres
                let (sx, sy) = (u - 0.5, v - 0.5);
                let (x0, y0) = (sx.floor(), sy.floor());
                if !(x0 >= 0.0 && y0 >= 0.0 && x0 + 1.0 <= (wb - 1) as f64 && y0 + 1.0 <= (hb - 1) as f64) {
                    continue;
                }
                let (x0, y0) = (x0 as usize, y0 as usize);
                let taps = [y0 * wb + x0, y0 * wb + x0 + 1, (y0 + 1) * wb + x0, (y0 + 1) * wb + x0 + 1];
                let mut depths = [0.0; 4];
                let mut all_valid = true;
                for (d, &i) in depths.iter_mut().zip(&taps) {
                    match surface_depth(self.b, i) {
                        Some(z) => *d = z,
                        None => all_valid = false,
                    }
                }
                if !all_valid {
                    continue;
                }
                // inverse depth is affine across a planar patch, so interpolate it
                let inv = depths.map(|d| 1.0 / d);
                let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
                let wts = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
                let inv_b: f64 = (0..4).map(|j| wts[j] * inv[j]).sum();
                let db = 1.0 / inv_b;
                let zt = pb.z;
                let gap = db - zt;
                let r = gap.abs() / zt;
                if r > OCCLUSION_GAP {
                    rejected += 1;
                    continue;
                }
                sum += r;
                tested += 1;

                let Some((ga, gb)) = grads.as_mut() else { continue };
                let s = sign(gap);
                let dr_ddb = s / zt;
                let dr_dzt = -s * db / (zt * zt);
                let dr_dinv = dr_ddb * (-db * db);
                // through the sampled taps
                for j in 0..4 {
                    let i = taps[j];
                    let dr_dz = dr_dinv * wts[j] * (-inv[j] * inv[j]);
                    let alpha = self.b.alpha.data()[i];
                    gb.depth[i] += dr_dz / alpha;
                    gb.alpha[i] -= dr_dz * self.b.depth.data()[i] / (alpha * alpha);
                }
                // through the sample location and the transformed depth
                let dinv_dtx = (1.0 - ty) * (inv[1] - inv[0]) + ty * (inv[3] - inv[2]);
                let dinv_dty = (1.0 - tx) * (inv[2] - inv[0]) + tx * (inv[3] - inv[1]);
                let iz = 1.0 / pb.z;
                let du = Vector3::new(fx * iz, 0.0, -fx * pb.x * iz * iz);
                let dv = Vector3::new(0.0, fy * iz, -fy * pb.y * iz * iz);
                let dr_dpb = (du * dinv_dtx + dv * dinv_dty) * dr_dinv + Vector3::z() * dr_dzt;
                let dr_dza = dr_dpb.dot(&k);
                let alpha = self.a.alpha.data()[ia];
                ga.depth[ia] += dr_dza / alpha;
                ga.alpha[ia] -= dr_dza * self.a.depth.data()[ia] / (alpha * alpha);
            }
        }
        MvsLoss {
            value: if tested == 0 { 0.0 } else { sum / tested as f64 },
            tested,
            rejected,
            backfacing,
            uninformative: tested == 0,
        }
    }
}

fn check(a: &RenderOutput, cam_a: &Camera, b: &RenderOutput, cam_b: &Camera) -> Result<()> {
    check_dims(a.depth.dims(), (cam_a.width, cam_a.height))?;
    check_dims(a.alpha.dims(), (cam_a.width, cam_a.height))?;
    check_dims(b.depth.dims(), (cam_b.width, cam_b.height))?;
    check_dims(b.alpha.dims(), (cam_b.width, cam_b.height))
}

/// Mean relative disagreement between view A's depth, carried into view B,
/// and view B's own depth at the landing point.
pub fn mvs_loss(a: &RenderOutput, cam_a: &Camera, b: &RenderOutput, cam_b: &Camera) -> Result<MvsLoss> {
    check(a, cam_a, b, cam_b)?;
    Ok(Pass { a, cam_a, b, cam_b }.run(None))
}

/// Loss together with the gradients of `upstream * loss` on both views.
pub fn mvs_loss_backward(
    a: &RenderOutput,
    cam_a: &Camera,
    b: &RenderOutput,
    cam_b: &Camera,
    upstream: f64,
) -> Result<(MvsLoss, DepthGrad, DepthGrad)> {
    check(a, cam_a, b, cam_b)?;
    let mut ga = DepthGrad::zeros(cam_a.width * cam_a.height);
    let mut gb = DepthGrad::zeros(cam_b.width * cam_b.height);
    let loss = Pass { a, cam_a, b, cam_b }.run(Some((&mut ga, &mut gb)));
    if loss.tested > 0 {
        let k = upstream / loss.tested as f64;
        for v in ga.depth.iter_mut().chain(&mut ga.alpha).chain(&mut gb.depth).chain(&mut gb.alpha) {
            *v *= k;
        }
    }
    Ok((loss, ga, gb))
}
