use std::hash::{Hash, Hasher};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::record::{RecordReader, RecordWriter};

pub const MIN_SCALE: f64 = 1e-4;
pub const MAX_SCALE: f64 = 1e2;
/// Opacity and colour logits are kept inside `[-LOGIT_BOUND, LOGIT_BOUND]`.
pub const LOGIT_BOUND: f64 = 12.0;

pub const MAGIC: &[u8; 8] = b"GSI3GAU1";
pub const VERSION: u32 = 1;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back onto the unit quaternion's
/// four components (before renormalization).
pub fn quat_matrix_backward(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let g = |r: usize, c: usize| g[(r, c)];
    [
        2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1)),
        2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2)),
        2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2)),
        2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1)),
    ]
}

/// Quaternion `(w, x, y, z)` for a rotation of `angle` radians about `axis`.
pub fn quat_from_axis_angle(axis: Vector3<f64>, angle: f64) -> [f64; 4] {
    let a = axis.normalize() * (angle / 2.0).sin();
    [(angle / 2.0).cos(), a.x, a.y, a.z]
}

/// Fixed-size set of anisotropic Gaussians in structure-of-arrays layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    /// 3 per Gaussian.
    pub positions: Vec<f64>,
    /// 3 per Gaussian, natural log of the per-axis standard deviation.
    pub log_scales: Vec<f64>,
    /// 4 per Gaussian, `(w, x, y, z)`.
    pub rotations: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    /// 3 per Gaussian, RGB through a sigmoid.
    pub color_logits: Vec<f64>,
}

/// One Gaussian in decoded form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub position: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    /// Appends a Gaussian given in decoded form.
    pub fn push(&mut self, g: &Gaussian) {
        self.positions.extend(g.position.iter());
        self.log_scales
            .extend(g.scale.iter().map(|s| s.clamp(MIN_SCALE, MAX_SCALE).ln()));
        let n = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.rotations.extend(g.rotation.iter().map(|v| v / n));
        self.opacity_logits
            .push(logit(g.opacity).clamp(-LOGIT_BOUND, LOGIT_BOUND));
        self.color_logits
            .extend(g.color.iter().map(|&c| logit(c).clamp(-LOGIT_BOUND, LOGIT_BOUND)));
    }

    pub fn from_gaussians(gs: &[Gaussian]) -> Self {
        let mut c = Self::default();
        for g in gs {
            c.push(g);
        }
        c
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.positions[3 * i..3 * i + 3])
    }

    pub fn log_scale(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.log_scales[3 * i..3 * i + 3])
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        self.log_scale(i).map(f64::exp)
    }

    /// Stored quaternion, not necessarily unit.
    pub fn rotation_raw(&self, i: usize) -> [f64; 4] {
        let r = &self.rotations[4 * i..4 * i + 4];
        [r[0], r[1], r[2], r[3]]
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        let c = &self.color_logits[3 * i..3 * i + 3];
        [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])]
    }

    pub fn gaussian(&self, i: usize) -> Gaussian {
        let q = self.rotation_raw(i);
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        Gaussian {
            position: self.position(i),
            scale: self.scale(i),
            rotation: q.map(|v| v / n),
            opacity: self.opacity(i),
            color: self.color(i),
        }
    }

    /// World-space covariance `R S^2 R^T`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let g = self.gaussian(i);
        let r = quat_to_matrix(g.rotation);
        let s2 = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
        r * s2 * r.transpose()
    }

    /// Restores the parameter domains: unit quaternions, scales inside
    /// `[MIN_SCALE, MAX_SCALE]` and bounded logits.
    pub fn project_to_domain(&mut self) {
        for q in self.rotations.chunks_exact_mut(4) {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 && n.is_finite() {
                q.iter_mut().for_each(|v| *v /= n);
            } else {
                q.copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            }
        }
        let (lo, hi) = (MIN_SCALE.ln(), MAX_SCALE.ln());
        self.log_scales.iter_mut().for_each(|s| *s = s.clamp(lo, hi));
        self.opacity_logits
            .iter_mut()
            .chain(self.color_logits.iter_mut())
            .for_each(|l| *l = l.clamp(-LOGIT_BOUND, LOGIT_BOUND));
    }

    pub fn all_finite(&self) -> bool {
        self.parameter_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_slices(&self) -> [&[f64]; 5] {
        [
            &self.positions,
            &self.log_scales,
            &self.rotations,
            &self.opacity_logits,
            &self.color_logits,
        ]
    }

    pub fn parameter_slices_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.positions,
            &mut self.log_scales,
            &mut self.rotations,
            &mut self.opacity_logits,
            &mut self.color_logits,
        ]
    }

    /// Hash of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for s in self.parameter_slices() {
            s.len().hash(&mut h);
            for v in s {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = RecordWriter::new(MAGIC, VERSION);
        w.u32(self.len() as u32);
        for s in self.parameter_slices() {
            w.f64s(s);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = RecordReader::new(bytes, MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        let mut c = Self {
            positions: vec![0.0; 3 * n],
            log_scales: vec![0.0; 3 * n],
            rotations: vec![0.0; 4 * n],
            opacity_logits: vec![0.0; n],
            color_logits: vec![0.0; 3 * n],
        };
        for s in c.parameter_slices_mut() {
            r.f64s(s)?;
        }
        r.finish()?;
        if !c.all_finite() {
            return Err(Error::NonFinite("Gaussian checkpoint".into()));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Gradient slots mirroring [`GaussianCloud`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CloudGrad {
    pub positions: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub rotations: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub color_logits: Vec<f64>,
}

impl CloudGrad {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![0.0; 3 * n],
            log_scales: vec![0.0; 3 * n],
            rotations: vec![0.0; 4 * n],
            opacity_logits: vec![0.0; n],
            color_logits: vec![0.0; 3 * n],
        }
    }

    pub fn slices(&self) -> [&[f64]; 5] {
        [
            &self.positions,
            &self.log_scales,
            &self.rotations,
            &self.opacity_logits,
            &self.color_logits,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.positions,
            &mut self.log_scales,
            &mut self.rotations,
            &mut self.opacity_logits,
            &mut self.color_logits,
        ]
    }

    pub fn add_assign(&mut self, other: &CloudGrad) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
