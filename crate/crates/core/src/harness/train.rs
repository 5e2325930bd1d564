use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::chamfer::chamfer;
use super::config::{RunConfig, TrainConfig};
use super::report::{IterationLog, Report};
use super::sample::sample_points;
use crate::error::{Error, Result};
use crate::illum::state::IllumState;
use crate::illum::{illum_backward, illum_forward, photometric_loss, ConvWeights};
use crate::imgcore::io::{write_image, write_scalar_pfm};
use crate::imgcore::{NormalMap, ScalarMap};
use crate::normalcomp::{gate, normal_comp_backward, normal_comp_forward, total_loss, ReferenceNormalProvider};
use crate::splat::{
    mvs_loss_backward, ply, rasterize, rasterize_backward, logit, AdamState, Camera, Gaussian, GaussianCloud, LOGIT_BOUND, RenderGrad,
    RenderOutput,
};
use crate::synth::{Dataset, OracleNormals, SceneKind, SceneSpec};

/// Stream offsets keeping the seeded generators independent.
const INIT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const NET_STREAM: u64 = 3;
/// Initial isotropic scale as a fraction of the mean point spacing.
const INIT_SCALE_FACTOR: f64 = 0.5;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

fn surface_area(scene: &SceneSpec) -> f64 {
    let e = scene.extent;
    match scene.kind {
        SceneKind::Sphere => 4.0 * std::f64::consts::PI * e * e,
        SceneKind::Plane => 4.0 * e * e,
        SceneKind::Box => 24.0 * e * e,
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Starting cloud: surface samples jittered by `noise` extents, isotropic
/// scales, random orientations and grey colour.
pub fn initial_cloud(scene: &SceneSpec, n: usize, noise: f64, opacity: f64, seed: u64) -> GaussianCloud {
    let mut rng = stream_rng(seed, INIT_STREAM);
    let anchors = scene.sample_surface(n, seed.wrapping_add(INIT_STREAM));
    let jitter = Normal::new(0.0, noise * scene.extent).expect("noise validated");
    let spacing = (surface_area(scene) / n as f64).sqrt();
    let scale = INIT_SCALE_FACTOR * spacing;
    let gs: Vec<Gaussian> = anchors
        .iter()
        .map(|a| {
            let offset = Vector3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng));
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            Gaussian {
                position: a + offset,
                scale: Vector3::repeat(scale),
                rotation: if q.iter().all(|v: &f64| *v == 0.0) { [1.0, 0.0, 0.0, 0.0] } else { q },
                opacity,
                color: [0.5; 3],
            }
        })
        .collect();
    GaussianCloud::from_gaussians(&gs)
}

/// Relative depth agreement for a Gaussian to count as visible in a view.
const VISIBILITY_GAP: f64 = 0.05;

/// Sets each Gaussian's colour to the mean observed colour over the views in
/// which it lies on the rendered front surface of `cloud`.
pub fn colorize_from_views(cloud: &mut GaussianCloud, dataset: &Dataset) -> Result<()> {
    let n = cloud.len();
    let mut sum = vec![[0.0; 3]; n];
    let mut hits = vec![0usize; n];
    for view in &dataset.views {
        let cam = &view.camera;
        let out = crate::splat::render(cloud, cam)?;
        for i in 0..n {
            let p = cam.to_camera(&cloud.position(i));
            if p.z <= crate::splat::Z_NEAR {
                continue;
            }
            let (u, v) = cam.project(&p);
            if !(u >= 0.0 && v >= 0.0 && u < cam.width as f64 && v < cam.height as f64) {
                continue;
            }
            let (x, y) = (u as usize, v as usize);
            let a = out.alpha.get(x, y);
            if a <= 0.5 {
                continue;
            }
            let surface = out.depth.get(x, y) / a;
            if (p.z - surface).abs() > VISIBILITY_GAP * surface {
                continue;
            }
            let c = view.observed.get(x, y);
            for k in 0..3 {
                sum[i][k] += c[k];
            }
            hits[i] += 1;
        }
    }
    for i in 0..n {
        if hits[i] > 0 {
            for k in 0..3 {
                let c = (sum[i][k] / hits[i] as f64).clamp(1e-3, 1.0 - 1e-3);
                cloud.color_logits[3 * i + k] = logit(c).clamp(-LOGIT_BOUND, LOGIT_BOUND);
            }
        }
    }
    Ok(())
}

struct Optimizers {
    cloud: [AdamState; 5],
    gamma: Vec<AdamState>,
    field: Vec<AdamState>,
    conv: [AdamState; 4],
}

impl Optimizers {
    fn new(n_views: usize) -> Self {
        Self {
            cloud: Default::default(),
            gamma: vec![AdamState::default(); n_views],
            field: vec![AdamState::default(); n_views],
            conv: Default::default(),
        }
    }
}

/// One view rendered by the current cloud, kept for the reverse pass.
struct Pass {
    view: usize,
    output: RenderOutput,
    record: crate::splat::RenderRecord,
    grad: RenderGrad,
}

/// Stateful training run. [`Trainer::step`] advances one iteration.
pub struct Trainer {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub references: Vec<NormalMap>,
    pub cloud: GaussianCloud,
    pub illum: IllumState,
    pub log: Vec<IterationLog>,
    iteration: usize,
    optim: Optimizers,
    snapshot_dir: Option<PathBuf>,
    abort_dir: Option<PathBuf>,
}

impl Trainer {
    /// Run with the exact analytic normal oracle.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let scene = config.scene.build()?;
        let oracle = OracleNormals::exact(scene);
        Self::with_provider(config, &oracle)
    }

    pub fn with_provider(config: RunConfig, provider: &dyn ReferenceNormalProvider) -> Result<Self> {
        config.validate()?;
        let scene = config.scene.build()?;
        let r = &config.render;
        let dataset = Dataset::generate(scene, &config.perturb.effective(), r.views, r.width, r.height)?;
        let references = dataset
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| provider.reference_normals(i, &v.camera, &v.observed))
            .collect::<Result<Vec<_>>>()?;
        let t = &config.train;
        let mut cloud = initial_cloud(&dataset.scene, t.gaussians, t.init_noise, t.init_opacity, t.seed);
        colorize_from_views(&mut cloud, &dataset)?;
        let mut illum = IllumState::new(r.views, 0);
        illum.net = ConvWeights::init(stream_rng(t.seed, NET_STREAM).random());
        Ok(Self {
            optim: Optimizers::new(r.views),
            config,
            dataset,
            references,
            cloud,
            illum,
            log: Vec::new(),
            iteration: 0,
            snapshot_dir: None,
            abort_dir: None,
        })
    }

    /// Directory for periodic render snapshots and abort dumps.
    pub fn with_output(mut self, dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        if self.config.output.snapshot_every > 0 {
            self.snapshot_dir = Some(dir.join("snapshots"));
        }
        self.abort_dir = Some(dir.join("abort"));
        self
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn camera(&self, v: usize) -> &Camera {
        &self.dataset.views[v].camera
    }

    fn render(&self, view: usize) -> Result<Pass> {
        let cam = self.camera(view);
        let (output, record) = rasterize(&self.cloud, cam)?;
        Ok(Pass {
            view,
            grad: RenderGrad::zeros(cam.width, cam.height),
            output,
            record,
        })
    }

    fn abort(&self, what: String, pass: &Pass, per_pixel: Option<&ScalarMap>) -> Error {
        let mut note = format!("iteration {}\nview {}\n{what}\n", self.iteration, pass.view);
        if let Some(dir) = &self.abort_dir {
            let dump = || -> Result<()> {
                std::fs::create_dir_all(dir)?;
                write_image(&pass.output.color, dir.join("color.pfm"))?;
                write_scalar_pfm(&pass.output.depth, dir.join("depth.pfm"))?;
                write_scalar_pfm(&pass.output.alpha, dir.join("alpha.pfm"))?;
                if let Some(m) = per_pixel {
                    write_scalar_pfm(m, dir.join("per_pixel_loss.pfm"))?;
                }
                self.cloud.save(dir.join("cloud.gau"))?;
                Ok(())
            };
            if let Err(e) = dump() {
                let _ = writeln!(note, "dump failed: {e}");
            }
            let _ = std::fs::write(dir.join("diagnostic.txt"), &note);
        }
        Error::NumericAbort {
            iteration: self.iteration,
            what,
        }
    }

    /// Runs one iteration and returns its log row.
    pub fn step(&mut self) -> Result<IterationLog> {
        let it = self.iteration;
        let n_views = self.dataset.views.len();
        let v = it % n_views;
        let sw = self.config.ablation;
        let w = self.config.loss;

        let mut main = self.render(v)?;
        let observed = &self.dataset.views[v].observed;

        // photometric or illumination-adjusted loss
        self.illum.views[v].zero_grad();
        self.illum.net.zero_grad();
        let (l_photo, per_pixel, g_color) = if sw.illum {
            let fwd = illum_forward(observed, &main.output.color, &self.illum.views[v], &self.illum.net, w.lambda);
            let fwd = fwd.map_err(|e| self.abort(e.to_string(), &main, None))?;
            let g = illum_backward(&fwd, w.illum, &mut self.illum.views[v], &mut self.illum.net);
            (fwd.loss.scalar, fwd.loss.per_pixel, g)
        } else {
            let pl = photometric_loss(&main.output.color, observed, w.lambda)
                .map_err(|e| self.abort(e.to_string(), &main, None))?;
            let g = pl.backward(&main.output.color, observed, w.illum).0;
            (pl.scalar, pl.per_pixel, g)
        };
        if !l_photo.is_finite() || per_pixel.data().iter().any(|x| !x.is_finite()) {
            return Err(self.abort("non-finite photometric loss".into(), &main, Some(&per_pixel)));
        }
        main.grad.color = g_color;

        // gated normal supervision
        let (l_normal, l_gradient, gated_fraction) = if sw.normal {
            let nc = normal_comp_forward(&per_pixel, &main.output.normal, &self.references[v], &w)
                .map_err(|e| self.abort(e.to_string(), &main, Some(&per_pixel)))?;
            main.grad.normal = normal_comp_backward(&nc, w.normal, w.gradient);
            (nc.normal.value, nc.gradient.value, nc.mask.fraction())
        } else {
            (0.0, 0.0, gate(&per_pixel, w.threshold).fraction())
        };

        // cross-view consistency against the next view
        let mut partner = None;
        let (mut l_mvs, mut mvs_tested) = (0.0, 0);
        if sw.mvs && it % self.config.train.mvs_every == 0 {
            let mut other = self.render((v + 1) % n_views)?;
            let (loss, ga, gb) = mvs_loss_backward(
                &main.output,
                self.camera(v),
                &other.output,
                self.camera(other.view),
                w.mvs,
            )?;
            l_mvs = loss.value;
            mvs_tested = loss.tested;
            main.grad.depth = ga.depth;
            main.grad.alpha = ga.alpha;
            other.grad.depth = gb.depth;
            other.grad.alpha = gb.alpha;
            partner = Some(other);
        }

        let total = total_loss(l_photo, l_normal, l_gradient, l_mvs, &w)
            .map_err(|e| self.abort(e.to_string(), &main, Some(&per_pixel)))?;

        let mut grad = rasterize_backward(&self.cloud, self.camera(v), &main.record, &main.output, &main.grad)?;
        if let Some(p) = &partner {
            grad.add_assign(&rasterize_backward(&self.cloud, self.camera(p.view), &p.record, &p.output, &p.grad)?);
        }
        if !grad.all_finite() {
            return Err(self.abort("non-finite Gaussian gradient".into(), &main, Some(&per_pixel)));
        }

        // parameter updates
        let lr = self.config.optim;
        let rates = [lr.position * self.dataset.scene.extent, lr.log_scale, lr.rotation, lr.opacity, lr.color];
        for (k, (p, g)) in self.cloud.parameter_slices_mut().into_iter().zip(grad.slices()).enumerate() {
            self.optim.cloud[k].update(p, g, rates[k]);
        }
        self.cloud.project_to_domain();
        if sw.illum {
            let view = &mut self.illum.views[v];
            let mut gp = view.gamma.values();
            self.optim.gamma[v].update(&mut gp, &view.gamma.grad, lr.gamma);
            view.gamma.set_values(gp);
            self.optim.field[v].update(&mut view.field.values, &view.field.grad, lr.field);
            view.field.project();
            let net = &mut self.illum.net;
            self.optim.conv[0].update(&mut net.layer1.weight, &net.layer1.grad_weight, lr.conv);
            self.optim.conv[1].update(&mut net.layer1.bias, &net.layer1.grad_bias, lr.conv);
            self.optim.conv[2].update(&mut net.layer2.weight, &net.layer2.grad_weight, lr.conv);
            self.optim.conv[3].update(&mut net.layer2.bias, &net.layer2.grad_bias, lr.conv);
        }

        if let Some(dir) = &self.snapshot_dir {
            if it % self.config.output.snapshot_every == 0 {
                std::fs::create_dir_all(dir)?;
                write_image(&main.output.color, dir.join(format!("iter_{it:05}_view_{v:02}.ppm")))?;
            }
        }

        let row = IterationLog {
            iteration: it,
            view: v,
            total,
            photometric: l_photo,
            normal: l_normal,
            gradient: l_gradient,
            mvs: l_mvs,
            gated_fraction,
            mvs_tested,
        };
        if it % self.config.train.log_every == 0 || it + 1 == self.config.train.iterations {
            self.log.push(row);
        }
        self.iteration += 1;
        Ok(row)
    }

    /// Chamfer distance of the current cloud against the ground-truth points.
    pub fn evaluate(&self) -> Result<f64> {
        let pts = self.eval_points()?;
        chamfer(&pts, &self.dataset.scene.gt_points)
    }

    pub fn eval_points(&self) -> Result<Vec<Vector3<f64>>> {
        evaluation_points(&self.cloud, &self.config.train)
    }

    /// Trains for the configured number of iterations.
    pub fn run(&mut self, label: &str) -> Result<Report> {
        let initial_chamfer = self.evaluate()?;
        while self.iteration < self.config.train.iterations {
            self.step()?;
        }
        let final_chamfer = self.evaluate()?;
        let gated_fraction = if self.log.is_empty() {
            0.0
        } else {
            self.log.iter().map(|l| l.gated_fraction).sum::<f64>() / self.log.len() as f64
        };
        let report = Report {
            code_version: CODE_VERSION.to_string(),
            label: label.to_string(),
            config: self.config.clone(),
            initial_chamfer,
            final_chamfer,
            gated_fraction,
            opaque_gaussians: (0..self.cloud.len()).filter(|&i| self.cloud.opacity(i) > 0.5).count(),
            log: self.log.clone(),
        };
        report.validate()?;
        Ok(report)
    }

    /// Writes the cloud and illumination checkpoints and the sampled points.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.cloud.save(dir.join("checkpoint.gau"))?;
        self.illum.save(dir.join("illum.ill"))?;
        ply::write_ply(dir.join("points.ply"), &self.eval_points()?)?;
        Ok(())
    }
}

/// The point sample scored against the ground truth at the end of a run.
pub fn evaluation_points(cloud: &GaussianCloud, train: &TrainConfig) -> Result<Vec<Vector3<f64>>> {
    sample_points(cloud, train.eval_points, train.seed.wrapping_add(EVAL_STREAM))
}

/// Trains `config`, writing the report, loss log, checkpoints and point
/// export into the configured output directory.
pub fn train(config: &RunConfig, label: &str) -> Result<Report> {
    let dir = config.output.dir.clone();
    let mut trainer = Trainer::new(config.clone())?.with_output(&dir);
    let report = trainer.run(label)?;
    report.write(&dir)?;
    trainer.write_artifacts(&dir)?;
    Ok(report)
}
