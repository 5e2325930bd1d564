use proptest::prelude::*;

use illumsplat::imgcore::io::read_image;
use illumsplat::imgcore::ImageRgb;
use illumsplat::normalcomp::ReferenceNormalProvider;
use illumsplat::splat::mvs_loss;
use illumsplat::synth::{
    make_cameras, parse_manifest, perturb, render_gt, Dataset, OracleNormals, PerturbSpec, SceneKind, SceneSpec,
};

const KINDS: [SceneKind; 3] = [SceneKind::Sphere, SceneKind::Plane, SceneKind::Box];

#[test]
fn ground_truth_normals_are_unit_and_face_the_camera() {
    for kind in KINDS {
        let scene = SceneSpec::new(kind, 1.0, 64, 1).unwrap();
        for cam in make_cameras(&scene, 6, 40, 32).unwrap() {
            let gt = render_gt(&scene, &cam);
            assert!(gt.normal.is_unit());
            assert!(gt.normal.valid_count() > 0);
            for y in 0..cam.height {
                for x in 0..cam.width {
                    if let Some(n) = gt.normal.get(x, y) {
                        let ray = cam.pixel_ray(x, y);
                        assert!(n[0] * ray.x + n[1] * ray.y + n[2] * ray.z <= 0.0, "{kind:?} at ({x},{y})");
                    }
                }
            }
        }
    }
}

#[test]
fn plane_depth_maps_reproject_exactly() {
    let scene = SceneSpec::new(SceneKind::Plane, 1.0, 64, 0).unwrap();
    let cams = make_cameras(&scene, 16, 64, 64).unwrap();
    let outs: Vec<_> = cams.iter().map(|c| render_gt(&scene, c).as_render_output()).collect();
    for v in 0..cams.len() {
        let u = (v + 1) % cams.len();
        let loss = mvs_loss(&outs[v], &cams[v], &outs[u], &cams[u]).unwrap();
        assert!(loss.tested > 500);
        assert!(loss.value < 1e-6, "views {v},{u}: {}", loss.value);
    }
}

/// Curved and creased surfaces leave a residual set by bilinear depth
/// interpolation; it shrinks as resolution grows.
#[test]
fn curved_surface_residual_shrinks_with_resolution() {
    for kind in [SceneKind::Sphere, SceneKind::Box] {
        let scene = SceneSpec::new(kind, 1.0, 64, 0).unwrap();
        let worst = |size: usize| {
            let cams = make_cameras(&scene, 16, size, size).unwrap();
            let outs: Vec<_> = cams.iter().map(|c| render_gt(&scene, c).as_render_output()).collect();
            (0..cams.len())
                .map(|v| {
                    let u = (v + 1) % cams.len();
                    mvs_loss(&outs[v], &cams[v], &outs[u], &cams[u]).unwrap().value
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (worst(64), worst(128));
        assert!(coarse < 2e-3 && fine < coarse, "{kind:?}: {coarse} then {fine}");
    }
}

#[test]
fn exact_oracle_serves_the_ground_truth_normals() {
    let scene = SceneSpec::new(SceneKind::Box, 1.0, 64, 2).unwrap();
    let cams = make_cameras(&scene, 4, 32, 32).unwrap();
    let oracle = OracleNormals::exact(scene.clone());
    for (i, cam) in cams.iter().enumerate() {
        let served = oracle.reference_normals(i, cam, &ImageRgb::new(32, 32)).unwrap();
        assert_eq!(served, render_gt(&scene, cam).normal);
    }
    let noisy = OracleNormals::noisy(scene.clone(), 0.1, 3).unwrap();
    let served = noisy.reference_normals(0, &cams[0], &ImageRgb::new(32, 32)).unwrap();
    assert!(served.is_unit());
    assert_ne!(served, render_gt(&scene, &cams[0]).normal);
}

#[test]
fn dataset_files_and_manifest_round_trip() {
    let scene = SceneSpec::new(SceneKind::Sphere, 1.0, 128, 4).unwrap();
    let spec = PerturbSpec {
        seed: 8,
        ..PerturbSpec::default()
    };
    let data = Dataset::generate(scene, &spec, 3, 24, 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.write(dir.path()).unwrap();
    let manifest = parse_manifest(&std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 3);
    for (m, v) in manifest.iter().zip(&data.views) {
        assert_eq!(m.draw, v.draw);
        assert!((m.camera.rotation - v.camera.rotation).abs().max() < 1e-12);
    }
    let observed = read_image(dir.path().join("view_001.pfm")).unwrap();
    assert!(observed.data().iter().zip(data.views[1].observed.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    assert!(dir.path().join("gt_points.ply").exists());
}

proptest! {
    #[test]
    fn perturbation_maps_unit_interval_to_itself(
        values in prop::collection::vec(0.0f64..=1.0, 48),
        seed in any::<u64>(),
        view in 0usize..1000,
        lo in 0.1f64..1.0,
        span in 0.0f64..2.0,
    ) {
        let img = ImageRgb::from_vec(4, 4, values).unwrap();
        let spec = PerturbSpec {
            brightness_lo: lo,
            brightness_hi: lo + span,
            contrast_lo: lo,
            contrast_hi: lo + span,
            gamma_choices: vec![0.1, 0.8],
            seed,
        };
        let out = perturb(&img, &spec, view).unwrap();
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(out, perturb(&img, &spec, view).unwrap());
        let d = spec.draw(view);
        prop_assert!(d.brightness >= lo && d.brightness <= lo + span);
        prop_assert!(spec.gamma_choices.contains(&d.gamma));
    }
}
