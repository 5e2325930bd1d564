use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::{facing, SceneSpec};
use crate::imgcore::{ImageRgb, NormalMap, ScalarMap};
use crate::splat::{Camera, RenderOutput};

/// Exact render of an analytic scene from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image: ImageRgb,
    /// Camera-space unit normals facing the camera; background is invalid.
    pub normal: NormalMap,
    /// Camera-space depth; background holds 0.
    pub depth: ScalarMap,
}

impl GroundTruth {
    /// Coverage mask as alpha (1 on the surface, 0 on background).
    pub fn alpha(&self) -> ScalarMap {
        let data = self.normal.validity().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        ScalarMap::from_vec(self.normal.width(), self.normal.height(), data).expect("dims match")
    }

    /// The same buffers in the rasterizer's output layout.
    pub fn as_render_output(&self) -> RenderOutput {
        RenderOutput {
            color: self.image.clone(),
            depth: self.depth.clone(),
            normal: self.normal.clone(),
            alpha: self.alpha(),
        }
    }
}

struct Sample {
    color: [f64; 3],
    normal: [f64; 3],
    depth: f64,
}

fn trace(scene: &SceneSpec, cam: &Camera, x: usize, y: usize) -> Option<Sample> {
    let rt = cam.rotation.transpose();
    // unit camera-space z, so the ray parameter is the depth
    let dir = rt * cam.pixel_ray(x, y);
    let hit = scene.intersect(&cam.center(), &dir)?;
    let n_cam: Vector3<f64> = cam.rotation * facing(&hit.normal, &dir);
    Some(Sample {
        color: scene.shade(&hit, &dir),
        normal: [n_cam.x, n_cam.y, n_cam.z],
        depth: hit.t,
    })
}

pub fn render_gt(scene: &SceneSpec, cam: &Camera) -> GroundTruth {
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<Vec<Option<Sample>>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| trace(scene, cam, x, y)).collect())
        .collect();
    let mut image = ImageRgb::new(w, h);
    let mut normal = NormalMap::new(w, h);
    let mut depth = ScalarMap::new(w, h);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, s) in row.into_iter().enumerate() {
            if let Some(s) = s {
                image.set(x, y, s.color);
                normal.set(x, y, s.normal);
                depth.set(x, y, s.depth);
            }
        }
    }
    GroundTruth { image, normal, depth }
}
