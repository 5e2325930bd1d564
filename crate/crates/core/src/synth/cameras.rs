use nalgebra::Vector3;

use super::scene::{SceneKind, SceneSpec};
use crate::error::{Error, Result};
use crate::splat::Camera;

/// Orbit radius in units of the scene extent.
pub const ORBIT_RADIUS: f64 = 3.0;
/// Focal length in units of the image width.
pub const FOCAL_FACTOR: f64 = 0.8;
/// Ring elevation for the plane and box scenes, degrees.
pub const RING_ELEVATION: f64 = 40.0;
/// Elevations cycled through for sphere scenes, degrees.
pub const HEMISPHERE_ELEVATIONS: [f64; 3] = [10.0, 35.0, 60.0];

/// Azimuth of view `i` out of `n`, degrees.
pub fn azimuth(i: usize, n: usize) -> f64 {
    360.0 * i as f64 / n as f64
}

pub fn elevation(kind: SceneKind, i: usize) -> f64 {
    match kind {
        SceneKind::Sphere => HEMISPHERE_ELEVATIONS[i % HEMISPHERE_ELEVATIONS.len()],
        SceneKind::Plane | SceneKind::Box => RING_ELEVATION,
    }
}

/// Evenly spaced cameras around the scene, all aimed at the origin.
pub fn make_cameras(scene: &SceneSpec, n_views: usize, width: usize, height: usize) -> Result<Vec<Camera>> {
    if n_views < 2 {
        return Err(Error::InvalidArgument(format!("at least 2 views are required, got {n_views}")));
    }
    let radius = ORBIT_RADIUS * scene.extent;
    (0..n_views)
        .map(|i| {
            let az = azimuth(i, n_views).to_radians();
            let el = elevation(scene.kind, i).to_radians();
            let eye = radius * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera::look_at(eye, Vector3::zeros(), Vector3::z(), FOCAL_FACTOR * width as f64, width, height)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_views_are_a_quarter_turn_apart() {
        let scene = SceneSpec::new(SceneKind::Plane, 1.0, 0, 0).unwrap();
        let cams = make_cameras(&scene, 4, 32, 32).unwrap();
        for (i, cam) in cams.iter().enumerate() {
            let c = cam.center();
            let az = c.y.atan2(c.x).to_degrees().rem_euclid(360.0);
            assert!((az - 90.0 * i as f64).abs() < 1e-9, "{az}");
            assert!((c.norm() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optical_axes_hit_the_centroid() {
        for kind in [SceneKind::Sphere, SceneKind::Plane, SceneKind::Box] {
            let scene = SceneSpec::new(kind, 1.7, 0, 0).unwrap();
            for cam in make_cameras(&scene, 7, 40, 30).unwrap() {
                let to_centre = (-cam.center()).normalize();
                assert!((cam.forward() - to_centre).norm() < 1e-6);
                assert_eq!((cam.fx, cam.fy), (32.0, 32.0));
            }
        }
    }

    #[test]
    fn single_view_is_rejected() {
        let scene = SceneSpec::new(SceneKind::Sphere, 1.0, 0, 0).unwrap();
        assert!(make_cameras(&scene, 1, 16, 16).is_err());
        assert!(make_cameras(&scene, 0, 16, 16).is_err());
    }
}
