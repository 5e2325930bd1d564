use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Sphere of radius `extent` at the origin.
    Sphere,
    /// Square of half-size `extent` in the plane z = 0.
    Plane,
    /// Axis-aligned cube of half-size `extent` at the origin.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Checker,
    Stripe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Texture {
    pub pattern: Pattern,
    /// Cells per world unit.
    pub frequency: f64,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            pattern: Pattern::Checker,
            frequency: 4.0,
            color_a: [0.85, 0.7, 0.5],
            color_b: [0.25, 0.35, 0.6],
        }
    }
}

impl Texture {
    pub fn albedo(&self, p: &Vector3<f64>) -> [f64; 3] {
        let cell = |v: f64| (v * self.frequency).floor() as i64;
        let parity = match self.pattern {
            Pattern::Checker => cell(p.x) + cell(p.y) + cell(p.z),
            Pattern::Stripe => cell(p.x + p.y + p.z),
        };
        if parity.rem_euclid(2) == 0 {
            self.color_a
        } else {
            self.color_b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Light {
    /// Direction towards the light; normalized on use.
    pub direction: [f64; 3],
    pub ambient: f64,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            direction: [0.4, -0.3, 0.85],
            ambient: 0.25,
        }
    }
}

impl Light {
    pub fn unit_direction(&self) -> Vector3<f64> {
        Vector3::from(self.direction).normalize()
    }
}

/// Analytic scene with its dense ground-truth surface samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub extent: f64,
    pub texture: Texture,
    pub light: Light,
    pub gt_points: Vec<Vector3<f64>>,
    pub seed: u64,
}

/// Ray-surface hit: ray parameter and outward world normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, extent: f64, n_points: usize, seed: u64) -> Result<Self> {
        Self::with_appearance(kind, extent, n_points, seed, Texture::default(), Light::default())
    }

    pub fn with_appearance(
        kind: SceneKind,
        extent: f64,
        n_points: usize,
        seed: u64,
        texture: Texture,
        light: Light,
    ) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidArgument(format!("scene extent must be positive, got {extent}")));
        }
        if Vector3::from(light.direction).norm() == 0.0 {
            return Err(Error::InvalidArgument("light direction is zero".into()));
        }
        let mut s = Self {
            kind,
            extent,
            texture,
            light,
            gt_points: Vec::new(),
            seed,
        };
        s.gt_points = s.sample_surface(n_points, seed);
        Ok(s)
    }

    /// Uniform samples on the analytic surface.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = self.extent;
        (0..n)
            .map(|_| match self.kind {
                SceneKind::Sphere => loop {
                    let v = Vector3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    );
                    if let Some(u) = v.try_normalize(1e-9) {
                        break u * e;
                    }
                },
                SceneKind::Plane => Vector3::new(rng.random_range(-e..=e), rng.random_range(-e..=e), 0.0),
                SceneKind::Box => {
                    let face = rng.random_range(0..6);
                    let axis = face / 2;
                    let side = if face % 2 == 0 { e } else { -e };
                    let mut p = Vector3::new(rng.random_range(-e..=e), rng.random_range(-e..=e), rng.random_range(-e..=e));
                    p[axis] = side;
                    p
                }
            })
            .collect()
    }

    /// Signed distance-like residual; zero on the surface.
    pub fn surface_residual(&self, p: &Vector3<f64>) -> f64 {
        let e = self.extent;
        match self.kind {
            SceneKind::Sphere => p.norm() - e,
            SceneKind::Plane => p.z.abs() + (p.x.abs() - e).max(0.0) + (p.y.abs() - e).max(0.0),
            SceneKind::Box => {
                let q = p.abs() - Vector3::repeat(e);
                q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
            }
        }
    }

    /// Nearest intersection with `t > 0` of the ray `origin + t dir`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let e = self.extent;
        match self.kind {
            SceneKind::Sphere => {
                let b = origin.dot(dir);
                let a = dir.norm_squared();
                let c = origin.norm_squared() - e * e;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / a, (-b + sq) / a].into_iter().find(|&t| t > 0.0)?;
                let point = origin + dir * t;
                Some(Hit {
                    t,
                    point,
                    normal: point / e,
                })
            }
            SceneKind::Plane => {
                if dir.z == 0.0 {
                    return None;
                }
                let t = -origin.z / dir.z;
                let point = origin + dir * t;
                (t > 0.0 && point.x.abs() <= e && point.y.abs() <= e).then(|| Hit {
                    t,
                    point: Vector3::new(point.x, point.y, 0.0),
                    normal: Vector3::z(),
                })
            }
            SceneKind::Box => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                for k in 0..3 {
                    if dir[k] == 0.0 {
                        if origin[k].abs() > e {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-e - origin[k]) / dir[k], (e - origin[k]) / dir[k]);
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    if near > t0 {
                        t0 = near;
                        axis = k;
                    }
                    t1 = t1.min(far);
                }
                if t0 > t1 || t0 <= 0.0 {
                    return None;
                }
                let mut point = origin + dir * t0;
                let side = if dir[axis] > 0.0 { -e } else { e };
                point[axis] = side;
                let mut normal = Vector3::zeros();
                normal[axis] = side.signum();
                Some(Hit { t: t0, point, normal })
            }
        }
    }

    /// Lambertian shading of a hit seen along `dir`.
    pub fn shade(&self, hit: &Hit, dir: &Vector3<f64>) -> [f64; 3] {
        let n = facing(&hit.normal, dir);
        let lambert = self.light.ambient + n.dot(&self.light.unit_direction()).max(0.0);
        self.texture.albedo(&hit.point).map(|a| (a * lambert).clamp(0.0, 1.0))
    }
}

/// `n` flipped, if needed, so that it opposes the viewing direction.
pub fn facing(n: &Vector3<f64>, dir: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(dir) > 0.0 {
        -n
    } else {
        *n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_points_lie_on_surfaces() {
        for kind in [SceneKind::Sphere, SceneKind::Plane, SceneKind::Box] {
            let s = SceneSpec::new(kind, 1.3, 500, 4).unwrap();
            assert_eq!(s.gt_points.len(), 500);
            for p in &s.gt_points {
                assert!(s.surface_residual(p).abs() < 1e-6, "{kind:?} {p:?}");
            }
        }
    }

    #[test]
    fn sphere_hit_from_outside() {
        let s = SceneSpec::new(SceneKind::Sphere, 1.0, 0, 0).unwrap();
        let h = s.intersect(&Vector3::new(0.0, 0.0, 3.0), &Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert!((h.t - 2.0).abs() < 1e-12);
        assert!((h.normal - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn box_hit_reports_face_normal() {
        let s = SceneSpec::new(SceneKind::Box, 1.0, 0, 0).unwrap();
        let h = s.intersect(&Vector3::new(3.0, 0.2, 0.1), &Vector3::new(-1.0, 0.0, 0.0)).unwrap();
        assert!((h.t - 2.0).abs() < 1e-12);
        assert_eq!(h.normal, Vector3::x());
        assert!(s.intersect(&Vector3::new(3.0, 2.0, 0.0), &Vector3::new(-1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn plane_misses_outside_square() {
        let s = SceneSpec::new(SceneKind::Plane, 1.0, 0, 0).unwrap();
        assert!(s.intersect(&Vector3::new(1.5, 0.0, 2.0), &Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(s.intersect(&Vector3::new(0.5, 0.0, 2.0), &Vector3::new(0.0, 0.0, -1.0)).is_some());
    }

    #[test]
    fn texture_alternates() {
        let t = Texture::default();
        assert_ne!(t.albedo(&Vector3::new(0.1, 0.1, 0.1)), t.albedo(&Vector3::new(0.35, 0.1, 0.1)));
    }

    #[test]
    fn rejects_bad_extent() {
        assert!(SceneSpec::new(SceneKind::Sphere, 0.0, 10, 0).is_err());
    }
}
