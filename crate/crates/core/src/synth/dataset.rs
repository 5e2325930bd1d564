use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::cameras::make_cameras;
use super::perturb::{PerturbDraw, PerturbSpec};
use super::render::{render_gt, GroundTruth};
use super::scene::{SceneKind, SceneSpec};
use crate::error::{Error, Result};
use crate::imgcore::io::{write_image, write_scalar_pfm};
use crate::imgcore::{ImageRgb, NormalMap};
use crate::splat::{ply, Camera};

pub const MANIFEST_HEADER: &str = "illumsplat-dataset 1";

/// One generated view.
#[derive(Debug, Clone)]
pub struct View {
    pub camera: Camera,
    pub truth: GroundTruth,
    /// Perturbed observation.
    pub observed: ImageRgb,
    pub draw: PerturbDraw,
}

/// A scene rendered from a camera ring with per-view exposure distortion.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scene: SceneSpec,
    pub views: Vec<View>,
}

impl Dataset {
    pub fn generate(
        scene: SceneSpec,
        perturb: &PerturbSpec,
        n_views: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        perturb.validate()?;
        let views = make_cameras(&scene, n_views, width, height)?
            .into_iter()
            .enumerate()
            .map(|(i, camera)| {
                let truth = render_gt(&scene, &camera);
                let draw = perturb.draw(i);
                View {
                    observed: draw.apply(&truth.image),
                    camera,
                    truth,
                    draw,
                }
            })
            .collect();
        Ok(Self { scene, views })
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    /// Writes images, depth and normal maps, surface points and the manifest.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (i, v) in self.views.iter().enumerate() {
            write_image(&v.observed, dir.join(format!("view_{i:03}.ppm")))?;
            write_image(&v.observed, dir.join(format!("view_{i:03}.pfm")))?;
            write_image(&v.truth.image, dir.join(format!("clean_{i:03}.pfm")))?;
            write_scalar_pfm(&v.truth.depth, dir.join(format!("depth_{i:03}.pfm")))?;
            write_image(&normal_image(&v.truth.normal), dir.join(format!("normal_{i:03}.pfm")))?;
        }
        ply::write_ply(dir.join("gt_points.ply"), &self.scene.gt_points)?;
        fs::write(dir.join("manifest.txt"), self.manifest())?;
        Ok(())
    }

    /// Line-oriented description: a header, the scene line, then one line per
    /// view with intrinsics, world-to-camera pose and perturbation factors.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MANIFEST_HEADER}");
        let kind = match self.scene.kind {
            SceneKind::Sphere => "sphere",
            SceneKind::Plane => "plane",
            SceneKind::Box => "box",
        };
        let _ = writeln!(
            s,
            "scene {kind} extent {} seed {} points {}",
            self.scene.extent,
            self.scene.seed,
            self.scene.gt_points.len()
        );
        for (i, v) in self.views.iter().enumerate() {
            let c = &v.camera;
            let r: Vec<String> = c.rotation.transpose().iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                s,
                "view {i} size {} {} intrinsics {} {} {} {} rotation {} translation {} {} {} brightness {} contrast {} gamma {}",
                c.width,
                c.height,
                c.fx,
                c.fy,
                c.cx,
                c.cy,
                r.join(" "),
                c.translation.x,
                c.translation.y,
                c.translation.z,
                v.draw.brightness,
                v.draw.contrast,
                v.draw.gamma
            );
        }
        s
    }
}

/// Normals as an RGB buffer, invalid pixels zero.
pub fn normal_image(map: &NormalMap) -> ImageRgb {
    let data = map
        .data()
        .iter()
        .zip(map.validity())
        .flat_map(|(n, &ok)| if ok { *n } else { [0.0; 3] })
        .collect();
    ImageRgb::from_vec(map.width(), map.height(), data).expect("dims match")
}

/// Camera and perturbation factors of one manifest view line.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestView {
    pub camera: Camera,
    pub draw: PerturbDraw,
}

fn field<'a>(tokens: &'a [&'a str], key: &str, count: usize) -> Result<&'a [&'a str]> {
    let at = tokens
        .iter()
        .position(|t| *t == key)
        .ok_or_else(|| Error::MalformedHeader(format!("manifest view line lacks {key:?}")))?;
    tokens
        .get(at + 1..at + 1 + count)
        .ok_or_else(|| Error::MalformedHeader(format!("manifest field {key:?} is short")))
}

fn numbers(tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|e| Error::MalformedHeader(format!("manifest number {t:?}: {e}"))))
        .collect()
}

/// Parses the view lines of a manifest.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestView>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::UnsupportedMagic(text.lines().next().unwrap_or("").to_string()));
    }
    let mut views = Vec::new();
    for line in lines.filter(|l| l.starts_with("view ")) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let size = numbers(field(&tokens, "size", 2)?)?;
        let k = numbers(field(&tokens, "intrinsics", 4)?)?;
        let r = numbers(field(&tokens, "rotation", 9)?)?;
        let t = numbers(field(&tokens, "translation", 3)?)?;
        let b = numbers(field(&tokens, "brightness", 1)?)?[0];
        let c = numbers(field(&tokens, "contrast", 1)?)?[0];
        let g = numbers(field(&tokens, "gamma", 1)?)?[0];
        let camera = Camera::new(
            k[0],
            k[1],
            k[2],
            k[3],
            Matrix3::from_row_slice(&r),
            Vector3::new(t[0], t[1], t[2]),
            size[0] as usize,
            size[1] as usize,
        )?;
        views.push(ManifestView {
            camera,
            draw: PerturbDraw {
                brightness: b,
                contrast: c,
                gamma: g,
            },
        });
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_cameras_and_draws() {
        let scene = SceneSpec::new(SceneKind::Sphere, 1.0, 10, 2).unwrap();
        let ds = Dataset::generate(scene, &PerturbSpec::default(), 3, 16, 12).unwrap();
        let parsed = parse_manifest(&ds.manifest()).unwrap();
        assert_eq!(parsed.len(), 3);
        for (p, v) in parsed.iter().zip(&ds.views) {
            assert_eq!(p.camera, v.camera);
            assert_eq!(p.draw, v.draw);
        }
        assert!(parse_manifest("other\n").is_err());
    }

    #[test]
    fn observed_images_follow_the_draws() {
        let scene = SceneSpec::new(SceneKind::Box, 1.0, 0, 0).unwrap();
        let ds = Dataset::generate(scene, &PerturbSpec::default(), 2, 8, 8).unwrap();
        for v in &ds.views {
            assert_eq!(v.observed, v.draw.apply(&v.truth.image));
        }
    }
}
