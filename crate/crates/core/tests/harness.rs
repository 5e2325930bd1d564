use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use proptest::prelude::*;

use illumsplat::harness::{chamfer, chamfer_brute_force, sample_points, train, Report, RunConfig, OPACITY_CUTOFF};
use illumsplat::splat::{ply, Gaussian, GaussianCloud};

fn default_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn small(dir: &Path) -> RunConfig {
    RunConfig::default()
        .with_overrides(&[
            "render.width=24",
            "render.height=24",
            "render.views=4",
            "train.iterations=6",
            "train.gaussians=96",
            "train.eval_points=256",
        ])
        .unwrap()
        .with_overrides(&[format!("output.dir=\"{}\"", dir.display())])
        .unwrap()
        .with_seed(3)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_illumsplat")).args(args).output().unwrap()
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0).prop_map(Vector3::from), 1..max)
}

proptest! {
    #[test]
    fn grid_chamfer_equals_brute_force(p in points(60), q in points(60)) {
        prop_assert_eq!(chamfer(&p, &q).unwrap(), chamfer_brute_force(&p, &q).unwrap());
    }

    #[test]
    fn chamfer_is_symmetric_and_zero_on_itself(p in points(40), q in points(40)) {
        prop_assert_eq!(chamfer(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(chamfer(&p, &q).unwrap(), chamfer(&q, &p).unwrap());
    }
}

#[test]
fn chamfer_worked_examples() {
    let o = Vector3::zeros();
    let x1 = Vector3::new(1.0, 0.0, 0.0);
    let x2 = Vector3::new(2.0, 0.0, 0.0);
    assert_eq!(chamfer(&[o], &[x1]).unwrap(), 1.0);
    assert_eq!(chamfer(&[o, x2], &[x1]).unwrap(), 1.0);
    assert!(chamfer(&[], &[x1]).is_err());
}

#[test]
fn samples_come_only_from_opaque_gaussians() {
    let g = |x: f64, opacity: f64| Gaussian {
        position: Vector3::new(x, 0.0, 0.0),
        scale: Vector3::repeat(0.01),
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity,
        color: [0.5; 3],
    };
    let cloud = GaussianCloud::from_gaussians(&[g(0.0, 0.9), g(5.0, OPACITY_CUTOFF), g(10.0, 0.6)]);
    let pts = sample_points(&cloud, 300, 1).unwrap();
    assert_eq!(pts.len(), 300);
    assert!(pts.iter().all(|p| p.x.abs() <= 0.01 || (p.x - 10.0).abs() <= 0.01));
    assert!(pts.iter().any(|p| p.x > 9.0));
    assert_eq!(pts, sample_points(&cloud, 300, 1).unwrap());
    assert!(sample_points(&GaussianCloud::from_gaussians(&[g(0.0, 0.2)]), 5, 1).is_err());
}

#[test]
fn shipped_config_is_the_default() {
    assert_eq!(RunConfig::load(default_config_path()).unwrap(), RunConfig::default());
}

#[test]
fn config_overrides_and_rejections() {
    let cfg = RunConfig::default()
        .with_overrides(&["loss.threshold=0.25", "scene.kind=box", "ablation.illum=false"])
        .unwrap();
    assert_eq!(cfg.loss.threshold, 0.25);
    assert!(!cfg.ablation.illum);
    assert!(RunConfig::default().with_overrides(&["train.nonsense=1"]).is_err());
    assert!(RunConfig::default().with_overrides(&["render.width=4"]).is_err());
    assert!(RunConfig::default().with_overrides(&["no equals sign"]).is_err());
    assert!(RunConfig::from_toml("[train]\nspeed = 3\n").is_err());
}

#[test]
fn short_runs_are_deterministic_and_finite() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(&small(&dir.path().join("a")), "a").unwrap();
    let b = train(&small(&dir.path().join("a")), "a").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.log.len(), 6);
    assert!(a.log.iter().all(|l| l.all_finite() && l.total >= 0.0));
    assert!(a.final_chamfer > 0.0 && a.initial_chamfer > 0.0);
    let saved = Report::from_json(&std::fs::read_to_string(dir.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(saved, a);
    let csv = std::fs::read_to_string(dir.path().join("a/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn cli_train_then_eval_reproduces_the_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let common = [
        "--set",
        "render.width=24",
        "--set",
        "render.height=24",
        "--set",
        "render.views=4",
        "--set",
        "train.gaussians=96",
        "--set",
        "train.eval_points=256",
        "--seed",
        "2",
    ];
    let mut args = vec!["train", "--iters", "2", "--out", out_s];
    args.extend(common);
    let run = cli(&args);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = Report::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.log.len(), 2);
    assert!(out.join("timing.json").exists());

    let ckpt = out.join("checkpoint.gau");
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap()];
    args.extend(common);
    let eval = cli(&args);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let score: f64 = String::from_utf8(eval.stdout).unwrap().trim().parse().unwrap();
    assert_eq!(score, report.final_chamfer);
}

#[test]
fn cli_eval_of_a_point_set_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.ply");
    let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.01, -1.0)).collect();
    ply::write_ply(&path, &pts).unwrap();
    let p = path.to_str().unwrap();
    let out = cli(&["eval", "--points", p, "--reference", p]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim().parse::<f64>().unwrap(), 0.0);
}

#[test]
fn cli_rejects_bad_usage_with_exit_one() {
    assert_eq!(cli(&["train", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["train", "--config", "/definitely/not/here.toml"]).status.code(), Some(1));
    assert_eq!(cli(&["eval"]).status.code(), Some(1));
    assert_eq!(cli(&["train", "--set", "render.views=1"]).status.code(), Some(1));
}

#[test]
fn cli_ablate_writes_four_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let run = cli(&[
        "ablate",
        "--iters",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "render.width=20",
        "--set",
        "render.height=20",
        "--set",
        "render.views=4",
        "--set",
        "train.gaussians=64",
        "--set",
        "train.eval_points=128",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for label in ["baseline", "illum-only", "normal-only", "full"] {
        let r = Report::from_json(&std::fs::read_to_string(out.join(label).join("report.json")).unwrap()).unwrap();
        assert_eq!(r.label, label);
    }
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
