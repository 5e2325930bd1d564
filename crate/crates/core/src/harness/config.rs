use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalcomp::LossWeights;
use crate::splat::LearningRates;
use crate::synth::{Light, PerturbSpec, SceneKind, SceneSpec, Texture};

pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub extent: f64,
    /// Ground-truth surface samples used for evaluation.
    pub points: usize,
    pub seed: u64,
    pub texture: Texture,
    pub light: Light,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::Sphere,
            extent: 1.0,
            points: 4096,
            seed: 0,
            texture: Texture::default(),
            light: Light::default(),
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> Result<SceneSpec> {
        SceneSpec::with_appearance(self.kind, self.extent, self.points, self.seed, self.texture, self.light)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    /// When false the observations are the clean renders.
    pub enabled: bool,
    pub brightness_lo: f64,
    pub brightness_hi: f64,
    pub contrast_lo: f64,
    pub contrast_hi: f64,
    pub gamma_choices: Vec<f64>,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        let s = PerturbSpec::default();
        Self {
            enabled: true,
            brightness_lo: s.brightness_lo,
            brightness_hi: s.brightness_hi,
            contrast_lo: s.contrast_lo,
            contrast_hi: s.contrast_hi,
            gamma_choices: s.gamma_choices,
            seed: s.seed,
        }
    }
}

impl PerturbConfig {
    pub fn spec(&self) -> PerturbSpec {
        PerturbSpec {
            brightness_lo: self.brightness_lo,
            brightness_hi: self.brightness_hi,
            contrast_lo: self.contrast_lo,
            contrast_hi: self.contrast_hi,
            gamma_choices: self.gamma_choices.clone(),
            seed: self.seed,
        }
    }

    /// Spec actually applied: neutral factors when disabled.
    pub fn effective(&self) -> PerturbSpec {
        if self.enabled {
            self.spec()
        } else {
            PerturbSpec {
                brightness_lo: 1.0,
                brightness_hi: 1.0,
                contrast_lo: 1.0,
                contrast_hi: 1.0,
                gamma_choices: vec![1.0],
                seed: self.seed,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub views: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            views: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Seeds the initial cloud, the network and evaluation sampling.
    pub seed: u64,
    pub gaussians: usize,
    /// Standard deviation of the initial position jitter, in scene extents.
    pub init_noise: f64,
    pub init_opacity: f64,
    /// The consistency term runs on iterations divisible by this.
    pub mvs_every: usize,
    /// Points drawn from the cloud for evaluation.
    pub eval_points: usize,
    /// Iterations between loss-log rows.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            seed: 0,
            gaussians: 1024,
            init_noise: 0.05,
            init_opacity: 0.6,
            mvs_every: 4,
            eval_points: 4096,
            log_every: 1,
        }
    }
}

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSwitches {
    /// Illumination adjustment in place of the plain photometric loss.
    pub illum: bool,
    /// Gated normal and normal-gradient supervision.
    pub normal: bool,
    /// Cross-view depth consistency.
    pub mvs: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationSwitches {
    pub const BASELINE: Self = Self {
        illum: false,
        normal: false,
        mvs: false,
    };
    pub const ILLUM_ONLY: Self = Self {
        illum: true,
        normal: false,
        mvs: false,
    };
    pub const NORMAL_ONLY: Self = Self {
        illum: false,
        normal: true,
        mvs: true,
    };
    pub const FULL: Self = Self {
        illum: true,
        normal: true,
        mvs: true,
    };

    /// The four ablation configurations in report order.
    pub fn variants() -> [(&'static str, Self); 4] {
        [
            ("baseline", Self::BASELINE),
            ("illum-only", Self::ILLUM_ONLY),
            ("normal-only", Self::NORMAL_ONLY),
            ("full", Self::FULL),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Iterations between PPM render snapshots; 0 disables them.
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_every: 0,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub perturb: PerturbConfig,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub optim: LearningRates,
    pub ablation: AblationSwitches,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides; values use TOML syntax, with
    /// bare words taken as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("config round-trips");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one element");
            let mut node = &mut table;
            for p in parents {
                node = node
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
            }
            node.insert(last.to_string(), value);
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.seed = seed;
        self.perturb.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.render.width < MIN_RESOLUTION || self.render.height < MIN_RESOLUTION {
            return bad(format!(
                "resolution {}x{} is below {MIN_RESOLUTION}",
                self.render.width, self.render.height
            ));
        }
        if self.render.views < 2 {
            return bad(format!("at least 2 views are required, got {}", self.render.views));
        }
        if self.train.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.train.gaussians < 1 || self.train.eval_points < 1 {
            return bad("gaussian and evaluation point counts must be positive".into());
        }
        if self.train.mvs_every < 1 || self.train.log_every < 1 {
            return bad("mvs_every and log_every must be at least 1".into());
        }
        if !(self.train.init_noise >= 0.0) {
            return bad(format!("init_noise must be non-negative, got {}", self.train.init_noise));
        }
        if !(self.train.init_opacity > 0.0 && self.train.init_opacity < 1.0) {
            return bad(format!("init_opacity must lie in (0, 1), got {}", self.train.init_opacity));
        }
        if !(self.scene.extent > 0.0) || self.scene.points < 1 {
            return bad("scene extent and point count must be positive".into());
        }
        self.perturb.spec().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))?;
        let r = &self.optim;
        for (name, v) in [
            ("position", r.position),
            ("log_scale", r.log_scale),
            ("rotation", r.rotation),
            ("opacity", r.opacity),
            ("color", r.color),
            ("gamma", r.gamma),
            ("conv", r.conv),
            ("field", r.field),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("learning rate {name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::default()
            .with_overrides(&[
                "train.iterations=5",
                "scene.kind=plane",
                "loss.threshold=0.25",
                "ablation.illum=false",
                "perturb.gamma_choices=[0.5]",
                "output.dir=/tmp/x",
            ])
            .unwrap();
        assert_eq!(cfg.train.iterations, 5);
        assert_eq!(cfg.scene.kind, SceneKind::Plane);
        assert_eq!(cfg.loss.threshold, 0.25);
        assert!(!cfg.ablation.illum && cfg.ablation.normal);
        assert_eq!(cfg.perturb.gamma_choices, vec![0.5]);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[train]\nbogus = 1\n").is_err());
        assert!(RunConfig::default().with_overrides(&["render.width=8"]).is_err());
        assert!(RunConfig::default().with_overrides(&["train.iterations=0"]).is_err());
        assert!(RunConfig::default().with_overrides(&["iterations"]).is_err());
        assert!(RunConfig::default().with_overrides(&["nosuch.key=1"]).is_err());
    }

    #[test]
    fn seed_reaches_every_section() {
        let cfg = RunConfig::default().with_seed(7);
        assert_eq!((cfg.scene.seed, cfg.perturb.seed, cfg.train.seed), (7, 7, 7));
    }
}
