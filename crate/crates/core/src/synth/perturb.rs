use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ImageRgb;

/// Ranges of the per-view exposure distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    pub brightness_lo: f64,
    pub brightness_hi: f64,
    pub contrast_lo: f64,
    pub contrast_hi: f64,
    pub gamma_choices: Vec<f64>,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            brightness_lo: 0.5,
            brightness_hi: 1.5,
            contrast_lo: 0.5,
            contrast_hi: 1.5,
            gamma_choices: vec![0.1, 0.8],
            seed: 0,
        }
    }
}

/// Factors drawn for one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbDraw {
    pub brightness: f64,
    pub contrast: f64,
    pub gamma: f64,
}

impl PerturbDraw {
    pub const NEUTRAL: Self = Self {
        brightness: 1.0,
        contrast: 1.0,
        gamma: 1.0,
    };

    pub fn apply_value(&self, v: f64) -> f64 {
        (self.contrast * (self.brightness * v - 0.5) + 0.5).clamp(0.0, 1.0).powf(self.gamma)
    }

    pub fn apply(&self, img: &ImageRgb) -> ImageRgb {
        img.map(|v| self.apply_value(v))
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, lo: f64, hi: f64| {
            if lo > 0.0 && lo <= hi && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} range [{lo}, {hi}] must satisfy 0 < lo <= hi")))
            }
        };
        range("brightness", self.brightness_lo, self.brightness_hi)?;
        range("contrast", self.contrast_lo, self.contrast_hi)?;
        if self.gamma_choices.is_empty() || self.gamma_choices.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "gamma choices must be a non-empty list of positive values, got {:?}",
                self.gamma_choices
            )));
        }
        Ok(())
    }

    /// Factors for `view`; a pure function of `(seed, view)`.
    pub fn draw(&self, view: usize) -> PerturbDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(view as u64);
        let brightness = rng.random_range(self.brightness_lo..=self.brightness_hi);
        let contrast = rng.random_range(self.contrast_lo..=self.contrast_hi);
        let gamma = self.gamma_choices[rng.random_range(0..self.gamma_choices.len())];
        PerturbDraw {
            brightness,
            contrast,
            gamma,
        }
    }
}

/// Applies the view's brightness, contrast and gamma distortion, in that order.
pub fn perturb(img: &ImageRgb, spec: &PerturbSpec, view: usize) -> Result<ImageRgb> {
    spec.validate()?;
    Ok(spec.draw(view).apply(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_factors_are_identity() {
        let spec = PerturbSpec {
            brightness_lo: 1.0,
            brightness_hi: 1.0,
            contrast_lo: 1.0,
            contrast_hi: 1.0,
            gamma_choices: vec![1.0],
            seed: 9,
        };
        let img = ImageRgb::from_vec(2, 1, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        assert_eq!(perturb(&img, &spec, 3).unwrap(), img);
    }

    #[test]
    fn mid_grey_under_low_gamma() {
        let d = PerturbDraw {
            gamma: 0.1,
            ..PerturbDraw::NEUTRAL
        };
        assert!((d.apply_value(0.5) - 0.933_032_991_536_807_4).abs() < 1e-12);
    }

    #[test]
    fn draws_are_deterministic_and_view_dependent() {
        let spec = PerturbSpec::default();
        assert_eq!(spec.draw(5), spec.draw(5));
        assert_ne!(spec.draw(5), spec.draw(6));
        let other = PerturbSpec { seed: 1, ..spec.clone() };
        assert_ne!(spec.draw(5), other.draw(5));
    }

    #[test]
    fn rejects_bad_ranges() {
        let bad = PerturbSpec {
            brightness_lo: 0.0,
            ..PerturbSpec::default()
        };
        assert!(bad.validate().is_err());
        let inverted = PerturbSpec {
            contrast_lo: 1.2,
            contrast_hi: 1.1,
            ..PerturbSpec::default()
        };
        assert!(inverted.validate().is_err());
        let no_gamma = PerturbSpec {
            gamma_choices: vec![],
            ..PerturbSpec::default()
        };
        assert!(no_gamma.validate().is_err());
    }
}
