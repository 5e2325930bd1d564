use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::render::render_gt;
use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::imgcore::{ImageRgb, NormalMap};
use crate::normalcomp::ReferenceNormalProvider;
use crate::splat::Camera;

/// Reference normals read off the analytic scene, optionally tilted by a
/// random angle per pixel.
#[derive(Debug, Clone)]
pub struct OracleNormals {
    pub scene: SceneSpec,
    /// Standard deviation of the tilt angle, radians.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl OracleNormals {
    pub fn exact(scene: SceneSpec) -> Self {
        Self {
            scene,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn noisy(scene: SceneSpec, noise_sigma: f64, seed: u64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma must be non-negative, got {noise_sigma}")));
        }
        Ok(Self {
            scene,
            noise_sigma,
            seed,
        })
    }

    fn corrupt(&self, map: &mut NormalMap, view: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(view as u64);
        let tilt = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        for y in 0..map.height() {
            for x in 0..map.width() {
                let Some(n) = map.get(x, y) else { continue };
                let n = Vector3::from(n);
                let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let u = n.cross(&helper).normalize();
                let v = n.cross(&u);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let axis = Unit::new_normalize(u * phi.cos() + v * phi.sin());
                let m = Rotation3::from_axis_angle(&axis, tilt.sample(&mut rng)) * n;
                map.set(x, y, [m.x, m.y, m.z]);
            }
        }
    }
}

impl ReferenceNormalProvider for OracleNormals {
    fn reference_normals(&self, view: usize, cam: &Camera, _image: &ImageRgb) -> Result<NormalMap> {
        let mut map = render_gt(&self.scene, cam).normal;
        if self.noise_sigma > 0.0 {
            self.corrupt(&mut map, view);
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_cameras, SceneKind};

    fn setup() -> (SceneSpec, Camera) {
        let scene = SceneSpec::new(SceneKind::Box, 1.0, 0, 0).unwrap();
        let cam = make_cameras(&scene, 3, 20, 20).unwrap().remove(1);
        (scene, cam)
    }

    #[test]
    fn exact_oracle_matches_ground_truth() {
        let (scene, cam) = setup();
        let gt = render_gt(&scene, &cam);
        let oracle = OracleNormals::exact(scene);
        let map = oracle.reference_normals(1, &cam, &gt.image).unwrap();
        assert_eq!(map, gt.normal);
        assert_eq!(map.validity(), gt.normal.validity());
    }

    #[test]
    fn noise_tilts_but_keeps_validity_and_length() {
        let (scene, cam) = setup();
        let gt = render_gt(&scene, &cam);
        let oracle = OracleNormals::noisy(scene, 0.1, 5).unwrap();
        let map = oracle.reference_normals(0, &cam, &gt.image).unwrap();
        assert_eq!(map.validity(), gt.normal.validity());
        assert!(map.is_unit());
        assert_ne!(map, gt.normal);
        assert_eq!(map, oracle.reference_normals(0, &cam, &gt.image).unwrap());
        assert!(OracleNormals::noisy(oracle.scene.clone(), -1.0, 0).is_err());
    }
}
