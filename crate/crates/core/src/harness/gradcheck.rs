//! Central finite differences against every analytic reverse pass.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::illum::{illum_backward, illum_forward, ConvWeights, GammaParams, ViewIllum, FEATURE_SIZE};
use crate::imgcore::{ImageRgb, NormalMap, ScalarMap};
use crate::normalcomp::{normal_comp_backward, normal_comp_forward, LossWeights};
use crate::splat::{
    mvs_loss, mvs_loss_backward, quat_from_axis_angle, rasterize, rasterize_backward, render, Camera, Gaussian,
    GaussianCloud, RenderGrad, RenderOutput,
};

pub const FD_STEP: f64 = 1e-4;
pub const ILLUM_TOLERANCE: f64 = 1e-3;
pub const NORMALCOMP_TOLERANCE: f64 = 1e-3;
pub const SPLAT_TOLERANCE: f64 = 1e-2;
/// Magnitude below which a gradient is compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;
pub const FIXTURE_SIZE: usize = 8;
pub const FIXTURE_GAUSSIANS: usize = 8;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seeds: Vec<u64>,
    pub step: f64,
    /// Sampled coordinates per convolution layer.
    pub conv_samples: usize,
    pub field_samples: usize,
    pub image_samples: usize,
    /// Test hook: scales the analytic gradient of the named group by 1.1.
    pub corrupt_group: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            step: FD_STEP,
            conv_samples: 6,
            field_samples: 8,
            image_samples: 4,
            corrupt_group: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupResult {
    pub group: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn group(&self, name: &str) -> Option<&GroupResult> {
        self.groups.iter().find(|g| g.group == name)
    }

    fn record(&mut self, group: &str, tolerance: f64, pairs: &[(f64, f64)]) {
        let err = pairs.iter().map(|&(a, n)| rel_err(a, n)).fold(0.0, f64::max);
        let err = if pairs.iter().any(|(a, n)| !(a.is_finite() && n.is_finite())) {
            f64::INFINITY
        } else {
            err
        };
        match self.groups.iter_mut().find(|g| g.group == group) {
            Some(g) => {
                g.checked += pairs.len();
                g.max_rel_err = g.max_rel_err.max(err);
                g.passed = g.max_rel_err <= g.tolerance;
            }
            None => self.groups.push(GroupResult {
                group: group.to_string(),
                checked: pairs.len(),
                max_rel_err: err,
                tolerance,
                passed: err <= tolerance,
            }),
        }
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>8} {:>12} {:>10}  result", "group", "checked", "max rel err", "tolerance")?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<22} {:>8} {:>12.3e} {:>10.0e}  {}",
                g.group,
                g.checked,
                g.max_rel_err,
                g.tolerance,
                if g.passed { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Central difference of `f` along coordinate `i` of the parameter vector
/// reached through `access`.
fn central<S>(state: &mut S, access: impl Fn(&mut S) -> &mut f64, step: f64, f: impl Fn(&S) -> f64) -> f64 {
    let orig = *access(state);
    *access(state) = orig + step;
    let plus = f(state);
    *access(state) = orig - step;
    let minus = f(state);
    *access(state) = orig;
    (plus - minus) / (2.0 * step)
}

/// Indices to probe: the largest-magnitude analytic entries plus a seeded
/// random selection.
fn probe_indices(grad: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(count.div_ceil(2)).collect();
    while picked.len() < count.min(grad.len()) {
        let i = rng.random_range(0..grad.len());
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageRgb {
    let data = (0..w * h * 3).map(|_| rng.random_range(0.05..0.95)).collect();
    ImageRgb::from_vec(w, h, data).expect("sized buffer")
}

struct IllumFixture {
    gt: ImageRgb,
    rendered: ImageRgb,
    view: ViewIllum,
    net: ConvWeights,
}

fn illum_fixture(seed: u64) -> IllumFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11u64);
    let gt = random_image(&mut rng, FIXTURE_SIZE, FIXTURE_SIZE);
    let rendered = random_image(&mut rng, FIXTURE_SIZE, FIXTURE_SIZE);
    let mut view = ViewIllum::default();
    let mut net = ConvWeights::init(seed);
    if seed != 0 {
        view.gamma = GammaParams::new(
            rng.random_range(0.6..1.4),
            rng.random_range(-0.3..0.3),
            rng.random_range(0.8..1.6),
            rng.random_range(-0.3..0.3),
        );
        view.field.values.iter_mut().for_each(|v| *v = rng.random_range(0.7..1.3));
        // keep hidden pre-activations away from the ReLU kink
        for b in &mut net.layer1.bias {
            *b = rng.random_range(0.15..0.4) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    IllumFixture {
        gt,
        rendered,
        view,
        net,
    }
}

fn corrupt(opts: &GradcheckOptions, group: &str, v: f64) -> f64 {
    if opts.corrupt_group.as_deref() == Some(group) {
        v * 1.1
    } else {
        v
    }
}

fn check_illum(seed: u64, opts: &GradcheckOptions, rep: &mut GradcheckReport) {
    let fx = illum_fixture(seed);
    let loss = |view: &ViewIllum, net: &ConvWeights, rendered: &ImageRgb| {
        illum_forward(&fx.gt, rendered, view, net, 0.2).expect("fixture dims").loss.scalar
    };
    let mut view = fx.view.clone();
    let mut net = fx.net.clone();
    let fwd = illum_forward(&fx.gt, &fx.rendered, &view, &net, 0.2).expect("fixture dims");
    let g_rendered = illum_backward(&fwd, 1.0, &mut view, &mut net);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22u64);

    let mut pairs = Vec::new();
    for k in 0..4 {
        let mut v = fx.view.clone();
        let n = central(
            &mut v,
            |v| match k {
                0 => &mut v.gamma.a,
                1 => &mut v.gamma.b,
                2 => &mut v.gamma.c,
                _ => &mut v.gamma.d,
            },
            opts.step,
            |v| loss(v, &fx.net, &fx.rendered),
        );
        pairs.push((corrupt(opts, "illum.gamma", view.gamma.grad[k]), n));
    }
    rep.record("illum.gamma", ILLUM_TOLERANCE, &pairs);

    let mut pairs = Vec::new();
    for layer in 0..2 {
        let (gw, gb) = if layer == 0 {
            (&net.layer1.grad_weight, &net.layer1.grad_bias)
        } else {
            (&net.layer2.grad_weight, &net.layer2.grad_bias)
        };
        let flat: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
        let n_w = gw.len();
        for i in probe_indices(&flat, opts.conv_samples, &mut rng) {
            let mut w = fx.net.clone();
            let n = central(
                &mut w,
                |w| {
                    let l = if layer == 0 { &mut w.layer1 } else { &mut w.layer2 };
                    if i < n_w {
                        &mut l.weight[i]
                    } else {
                        &mut l.bias[i - n_w]
                    }
                },
                opts.step,
                |w| loss(&fx.view, w, &fx.rendered),
            );
            pairs.push((corrupt(opts, "illum.conv", flat[i]), n));
        }
    }
    rep.record("illum.conv", ILLUM_TOLERANCE, &pairs);

    let mut pairs = Vec::new();
    for i in probe_indices(&view.field.grad, opts.field_samples, &mut rng) {
        let mut v = fx.view.clone();
        let n = central(&mut v, |v| &mut v.field.values[i], opts.step, |v| {
            loss(v, &fx.net, &fx.rendered)
        });
        pairs.push((corrupt(opts, "illum.field", view.field.grad[i]), n));
    }
    rep.record("illum.field", ILLUM_TOLERANCE, &pairs);

    let mut pairs = Vec::new();
    for i in probe_indices(&g_rendered, opts.image_samples, &mut rng) {
        let mut img = fx.rendered.clone();
        let n = central(&mut img, |img| &mut img.data_mut()[i], opts.step, |img| {
            loss(&fx.view, &fx.net, img)
        });
        pairs.push((corrupt(opts, "illum.rendered", g_rendered[i]), n));
    }
    rep.record("illum.rendered", ILLUM_TOLERANCE, &pairs);
    debug_assert_eq!(view.field.values.len(), FEATURE_SIZE * FEATURE_SIZE);
}

fn random_normals(rng: &mut ChaCha8Rng, w: usize, h: usize, invalid_rate: f64) -> NormalMap {
    let data = (0..w * h)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let valid = (0..w * h).map(|_| !rng.random_bool(invalid_rate)).collect();
    NormalMap::from_raw(w, h, data, valid).expect("sized buffer")
}

fn check_normalcomp(seed: u64, opts: &GradcheckOptions, rep: &mut GradcheckReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33u64);
    let (w, h) = (FIXTURE_SIZE, FIXTURE_SIZE);
    let pred = random_normals(&mut rng, w, h, 0.1);
    let reference = random_normals(&mut rng, w, h, 0.1);
    let per_pixel = ScalarMap::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0.0..0.2)).collect())
        .expect("sized buffer");

    for (group, w_normal, w_grad, gated) in [
        ("normalcomp.normal", 1.0, 0.0, false),
        ("normalcomp.gradient", 0.0, 1.0, false),
        ("normalcomp.gated", 0.15, 0.0015, true),
    ] {
        let weights = LossWeights {
            gate_gradient: gated,
            ..LossWeights::default()
        };
        let f = |p: &NormalMap| {
            let fwd = normal_comp_forward(&per_pixel, p, &reference, &weights).expect("fixture dims");
            w_normal * fwd.normal.value + w_grad * fwd.gradient.value
        };
        let fwd = normal_comp_forward(&per_pixel, &pred, &reference, &weights).expect("fixture dims");
        let g = normal_comp_backward(&fwd, w_normal, w_grad);
        let mut pairs = Vec::new();
        for i in 0..w * h {
            if !pred.validity()[i] {
                continue;
            }
            for c in 0..3 {
                let mut data = pred.data().to_vec();
                let valid = pred.validity().to_vec();
                let orig = data[i][c];
                data[i][c] = orig + opts.step;
                let plus = f(&NormalMap::from_raw(w, h, data.clone(), valid.clone()).expect("sized"));
                data[i][c] = orig - opts.step;
                let minus = f(&NormalMap::from_raw(w, h, data, valid).expect("sized"));
                pairs.push((corrupt(opts, group, g[i][c]), (plus - minus) / (2.0 * opts.step)));
            }
        }
        rep.record(group, NORMALCOMP_TOLERANCE, &pairs);
    }
}

/// Camera looking down +z from the origin at an 8x8 image.
pub fn fixture_camera() -> Camera {
    let s = FIXTURE_SIZE as f64;
    Camera::new(s, s, s / 2.0, s / 2.0, Matrix3::identity(), Vector3::zeros(), FIXTURE_SIZE, FIXTURE_SIZE)
        .expect("valid fixture camera")
}

/// Up to eight large, semi-transparent Gaussians whose support boxes cover
/// the whole fixture image.
pub fn splat_fixture(seed: u64) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x44u64);
    let gs: Vec<Gaussian> = (0..FIXTURE_GAUSSIANS)
        .map(|_| {
            let z: f64 = rng.random_range(2.0..4.0);
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let thin = rng.random_range(0.05..0.15) * z;
            Gaussian {
                position: Vector3::new(rng.random_range(-0.15..0.15) * z, rng.random_range(-0.15..0.15) * z, z),
                scale: Vector3::new(
                    rng.random_range(0.9..1.3) * z,
                    rng.random_range(0.9..1.3) * z,
                    thin,
                ),
                rotation: quat_from_axis_angle(axis, rng.random_range(-0.5..0.5)),
                opacity: rng.random_range(0.2..0.6),
                color: [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)],
            }
        })
        .collect();
    GaussianCloud::from_gaussians(&gs)
}

/// Random linear functional over every rendered channel.
fn channel_weights(seed: u64, w: usize, h: usize) -> RenderGrad {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55u64);
    let mut g = RenderGrad::zeros(w, h);
    g.color.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    g.depth.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    g.normal
        .iter_mut()
        .for_each(|n| *n = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
    g.alpha.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    g
}

fn functional(out: &RenderOutput, g: &RenderGrad) -> f64 {
    let mut s = 0.0;
    for (a, b) in out.color.data().iter().zip(&g.color) {
        s += a * b;
    }
    for (a, b) in out.depth.data().iter().zip(&g.depth) {
        s += a * b;
    }
    for (a, b) in out.alpha.data().iter().zip(&g.alpha) {
        s += a * b;
    }
    for (i, n) in out.normal.data().iter().enumerate() {
        if out.normal.validity()[i] {
            s += n[0] * g.normal[i][0] + n[1] * g.normal[i][1] + n[2] * g.normal[i][2];
        }
    }
    s
}

fn check_splat(seed: u64, opts: &GradcheckOptions, rep: &mut GradcheckReport) {
    let cam = fixture_camera();
    let cloud = splat_fixture(seed);
    let weights = channel_weights(seed, cam.width, cam.height);
    let (out, record) = rasterize(&cloud, &cam).expect("non-empty fixture");
    let grad = rasterize_backward(&cloud, &cam, &record, &out, &weights).expect("matching record");
    let f = |c: &GaussianCloud| functional(&render(c, &cam).expect("non-empty fixture"), &weights);

    let names = ["splat.position", "splat.log_scale", "splat.rotation", "splat.opacity", "splat.color"];
    let analytic = grad.slices();
    for (k, name) in names.iter().enumerate() {
        let mut pairs = Vec::new();
        for i in 0..analytic[k].len() {
            let mut c = cloud.clone();
            let n = central(&mut c, |c| &mut c.parameter_slices_mut()[k][i], opts.step, f);
            pairs.push((corrupt(opts, name, analytic[k][i]), n));
        }
        rep.record(name, SPLAT_TOLERANCE, &pairs);
    }
}

/// Smooth synthetic depth over a tilted plane with a gentle bump, seen by a
/// camera looking down +z. Different `base` values keep the reprojection gap
/// away from zero.
fn depth_view(cam: &Camera, seed: u64, base: f64) -> RenderOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cam.width, cam.height);
    let (tilt, bump) = (rng.random_range(-0.1..0.1), rng.random_range(0.02..0.08));
    let mut depth = ScalarMap::new(w, h);
    let mut alpha = ScalarMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64 - 0.5, y as f64 / h as f64 - 0.5);
            let z = base + tilt * u + bump * (4.0 * u).sin() * (3.0 * v).cos();
            let a = rng.random_range(0.8..1.0);
            alpha.set(x, y, a);
            depth.set(x, y, z * a);
        }
    }
    RenderOutput {
        color: ImageRgb::new(w, h),
        depth,
        normal: NormalMap::new(w, h),
        alpha,
    }
}

fn check_mvs(seed: u64, opts: &GradcheckOptions, rep: &mut GradcheckReport) {
    let cam_a = Camera::new(12.0, 12.0, 6.0, 6.0, Matrix3::identity(), Vector3::zeros(), 12, 12).expect("camera");
    let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), 0.05);
    let cam_b = Camera::new(12.0, 12.0, 6.0, 6.0, *rot.matrix(), Vector3::new(-0.12, 0.03, 0.0), 12, 12)
        .expect("camera");
    let a = depth_view(&cam_a, seed ^ 0x66, 3.0);
    let b = depth_view(&cam_b, seed ^ 0x77, 3.3);
    let (_, ga, gb) = mvs_loss_backward(&a, &cam_a, &b, &cam_b, 1.0).expect("fixture dims");
    let f = |a: &RenderOutput, b: &RenderOutput| mvs_loss(a, &cam_a, b, &cam_b).expect("fixture dims").value;

    let mut pairs = Vec::new();
    for (view, g) in [(0, &ga), (1, &gb)] {
        for (channel, grads) in [(0, &g.depth), (1, &g.alpha)] {
            for i in 0..grads.len() {
                let mut pair = (a.clone(), b.clone());
                let n = central(
                    &mut pair,
                    |p| {
                        let out = if view == 0 { &mut p.0 } else { &mut p.1 };
                        let map = if channel == 0 { &mut out.depth } else { &mut out.alpha };
                        &mut map.data_mut()[i]
                    },
                    opts.step,
                    |p| f(&p.0, &p.1),
                );
                pairs.push((corrupt(opts, "splat.mvs", grads[i]), n));
            }
        }
    }
    rep.record("splat.mvs", SPLAT_TOLERANCE, &pairs);
}

/// Runs every group over every seed.
pub fn gradcheck(opts: &GradcheckOptions) -> GradcheckReport {
    let mut rep = GradcheckReport::default();
    for &seed in &opts.seeds {
        check_illum(seed, opts, &mut rep);
        check_normalcomp(seed, opts, &mut rep);
        check_splat(seed, opts, &mut rep);
        check_mvs(seed, opts, &mut rep);
    }
    rep
}
