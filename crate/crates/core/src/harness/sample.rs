use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::splat::{quat_to_matrix, GaussianCloud};

/// Gaussians at or below this opacity are not sampled.
pub const OPACITY_CUTOFF: f64 = 0.5;

/// `n` points cycling over the opaque Gaussians; each is the mean plus a
/// draw from that Gaussian's covariance restricted to the unit Mahalanobis
/// ball.
pub fn sample_points(cloud: &GaussianCloud, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if cloud.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let opaque: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.opacity(i) > OPACITY_CUTOFF).collect();
    if opaque.is_empty() {
        return Err(Error::NoOpaqueGaussians {
            threshold: OPACITY_CUTOFF,
            total: cloud.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    Ok((0..n)
        .map(|k| {
            let i = opaque[k % opaque.len()];
            let z = loop {
                let z = Vector3::new(draw(), draw(), draw());
                if z.norm_squared() <= 1.0 {
                    break z;
                }
            };
            let r = quat_to_matrix(cloud.rotation_raw(i));
            cloud.position(i) + r * cloud.scale(i).component_mul(&z)
        })
        .collect())
}
