use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::camera::Camera;
use super::gaussian::{quat_matrix_backward, quat_to_matrix, CloudGrad, Gaussian, GaussianCloud};

/// Gaussians at or closer than this camera-space depth are culled.
pub const Z_NEAR: f64 = 0.01;
/// Gaussians below this opacity are culled; they would contribute less than
/// one 8-bit level anywhere.
pub const MIN_OPACITY: f64 = 1.0 / 255.0;
/// Isotropic screen-space dilation added to every projected covariance.
pub const COV2D_DILATION: f64 = 0.3;
/// Screen-space support in standard deviations.
pub const EXTENT_SIGMAS: f64 = 3.0;

/// A Gaussian after projection into one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub mean: [f64; 2],
    /// Screen covariance `(xx, xy, yy)`.
    pub cov: [f64; 3],
    /// Inverse covariance `(xx, xy, yy)`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Camera-space unit normal facing the camera.
    pub normal: [f64; 3],
    /// Half-widths of the axis-aligned support box, in pixels.
    pub extent: [f64; 2],
}

/// Gradient with respect to every field of [`Projected`] that is
/// differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectedGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
    pub normal: [f64; 3],
}

impl ProjectedGrad {
    pub fn add(&mut self, o: &ProjectedGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
            self.normal[k] += o.normal[k];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

/// Index of the smallest scale axis; ties go to the lowest index.
pub fn flattest_axis(scale: &Vector3<f64>) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if scale[i] < scale[k] {
            k = i;
        }
    }
    k
}

/// Sign that makes a camera-space normal face the camera at `t`.
fn facing_sign(n_cam: &Vector3<f64>, t: &Vector3<f64>) -> f64 {
    if n_cam.dot(t) > 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Camera-space unit normal of a Gaussian: its flattest axis, turned to face
/// the camera.
pub fn gaussian_normal(g: &Gaussian, cam: &Camera) -> Vector3<f64> {
    let r = quat_to_matrix(g.rotation);
    let n = cam.rotation * r.column(flattest_axis(&g.scale));
    let t = cam.to_camera(&g.position);
    n * facing_sign(&n, &t)
}

fn perspective_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz * iz,
    )
}

/// Projects one decoded Gaussian; `None` when it is culled.
pub fn project(g: &Gaussian, cam: &Camera) -> Option<Projected> {
    if !(g.opacity >= MIN_OPACITY) {
        return None;
    }
    let t = cam.to_camera(&g.position);
    if !(t.z > Z_NEAR) {
        return None;
    }
    let r = quat_to_matrix(g.rotation);
    let s2 = g.scale.component_mul(&g.scale);
    let sigma = r * Matrix3::from_diagonal(&s2) * r.transpose();
    let m = perspective_jacobian(cam, &t) * cam.rotation;
    let cov = m * sigma * m.transpose() + Matrix2::identity() * COV2D_DILATION;
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let n = cam.rotation * r.column(flattest_axis(&g.scale));
    let n = n * facing_sign(&n, &t);
    let (u, v) = cam.project(&t);
    Some(Projected {
        mean: [u, v],
        cov: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: t.z,
        opacity: g.opacity,
        color: g.color,
        normal: [n.x, n.y, n.z],
        extent: [EXTENT_SIGMAS * a.sqrt(), EXTENT_SIGMAS * c.sqrt()],
    })
}

/// Gradient on the stored parameters of a single Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianGrad {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color_logit: [f64; 3],
}

impl GaussianGrad {
    /// Adds this gradient into slot `i` of `out`.
    pub fn scatter(&self, i: usize, out: &mut CloudGrad) {
        for c in 0..3 {
            out.positions[3 * i + c] += self.position[c];
            out.log_scales[3 * i + c] += self.log_scale[c];
            out.color_logits[3 * i + c] += self.color_logit[c];
        }
        for c in 0..4 {
            out.rotations[4 * i + c] += self.rotation[c];
        }
        out.opacity_logits[i] += self.opacity_logit;
    }
}

/// Chains a screen-space gradient back onto the stored parameters of
/// Gaussian `i`.
pub fn project_backward(cloud: &GaussianCloud, i: usize, cam: &Camera, pg: &ProjectedGrad) -> GaussianGrad {
    let q_raw = cloud.rotation_raw(i);
    let q_norm = q_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = q_raw.map(|v| v / q_norm);
    let r = quat_to_matrix(q);
    let s = cloud.scale(i);
    let s2 = s.component_mul(&s);
    let d2 = Matrix3::from_diagonal(&s2);
    let sigma = r * d2 * r.transpose();
    let w = &cam.rotation;
    let t = cam.to_camera(&cloud.position(i));
    let j = perspective_jacobian(cam, &t);
    let m = j * w;
    let cov = m * sigma * m.transpose() + Matrix2::identity() * COV2D_DILATION;
    let k = cov.try_inverse().expect("projected covariance is positive definite");

    // inverse covariance
    let g_conic = Matrix2::new(pg.conic[0], pg.conic[1] / 2.0, pg.conic[1] / 2.0, pg.conic[2]);
    let g_cov = -(k * g_conic * k);
    let g_sigma = m.transpose() * g_cov * m;
    let g_m = 2.0 * g_cov * m * sigma;
    let g_j = g_m * w.transpose();

    // camera-space position
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let mut g_t = Vector3::zeros();
    g_t.x += pg.mean[0] * fx * iz;
    g_t.y += pg.mean[1] * fy * iz;
    g_t.z += -pg.mean[0] * fx * t.x * iz * iz - pg.mean[1] * fy * t.y * iz * iz;
    g_t.z += pg.depth;
    g_t.x += g_j[(0, 2)] * (-fx * iz * iz);
    g_t.y += g_j[(1, 2)] * (-fy * iz * iz);
    g_t.z += g_j[(0, 0)] * (-fx * iz * iz)
        + g_j[(1, 1)] * (-fy * iz * iz)
        + g_j[(0, 2)] * (2.0 * fx * t.x * iz * iz * iz)
        + g_j[(1, 2)] * (2.0 * fy * t.y * iz * iz * iz);
    let g_p = w.transpose() * g_t;

    // rotation and scale through the covariance, rotation through the normal
    let mut g_r = 2.0 * g_sigma * r * d2;
    let axis = flattest_axis(&s);
    let n_cam = w * r.column(axis);
    let sign = facing_sign(&n_cam, &t);
    let g_n = w.transpose() * Vector3::from(pg.normal) * sign;
    for row in 0..3 {
        g_r[(row, axis)] += g_n[row];
    }
    let rt_g_r = r.transpose() * g_sigma * r;
    let g_q_unit = quat_matrix_backward(q, &g_r);
    let dot: f64 = (0..4).map(|c| q[c] * g_q_unit[c]).sum();

    let o = cloud.opacity(i);
    let color = cloud.color(i);
    GaussianGrad {
        position: [g_p.x, g_p.y, g_p.z],
        log_scale: std::array::from_fn(|c| 2.0 * s2[c] * rt_g_r[(c, c)]),
        rotation: std::array::from_fn(|c| (g_q_unit[c] - q[c] * dot) / q_norm),
        opacity_logit: pg.opacity * o * (1.0 - o),
        color_logit: std::array::from_fn(|c| pg.color[c] * color[c] * (1.0 - color[c])),
    }
}
