use super::refine::FEATURE_SIZE;
use crate::error::{check_dims, Result};
use crate::imgcore::{Bilinear, ImageRgb, ScalarMap};

/// Smallest value an illumination field entry is projected to.
pub const FIELD_FLOOR: f64 = 1e-4;

/// Learnable per-view 224x224 positive illumination map.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationField {
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Default for IlluminationField {
    fn default() -> Self {
        Self::filled(1.0)
    }
}

impl IlluminationField {
    pub fn filled(v: f64) -> Self {
        Self {
            values: vec![v; FEATURE_SIZE * FEATURE_SIZE],
            grad: vec![0.0; FEATURE_SIZE * FEATURE_SIZE],
        }
    }

    pub fn as_map(&self) -> ScalarMap {
        ScalarMap::from_vec(FEATURE_SIZE, FEATURE_SIZE, self.values.clone()).expect("field size")
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Keeps every entry finite and strictly positive.
    pub fn project(&mut self) {
        for v in &mut self.values {
            if !v.is_finite() || *v < FIELD_FLOOR {
                *v = FIELD_FLOOR;
            }
        }
    }
}

/// Elementwise product of the field and the refined feature map.
pub fn fuse(field: &IlluminationField, f2: &ScalarMap) -> Result<ScalarMap> {
    check_dims((FEATURE_SIZE, FEATURE_SIZE), f2.dims())?;
    let data = field.values.iter().zip(f2.data()).map(|(m, f)| m * f).collect();
    ScalarMap::from_vec(FEATURE_SIZE, FEATURE_SIZE, data)
}

/// Bilinearly resizes `f_map` to the rendered resolution and multiplies it
/// into every channel.
pub fn modulate(f_map: &ScalarMap, rendered: &ImageRgb) -> ImageRgb {
    let resized = Bilinear::new(f_map.width(), f_map.height(), rendered.width(), rendered.height()).apply(f_map.data());
    modulate_resized(&resized, rendered)
}

pub(crate) fn modulate_resized(resized: &[f64], rendered: &ImageRgb) -> ImageRgb {
    let mut out = rendered.clone();
    for (px, r) in out.data_mut().chunks_exact_mut(3).zip(resized) {
        for v in px {
            *v *= r;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_identity_and_zero() {
        let mut f2 = ScalarMap::new(FEATURE_SIZE, FEATURE_SIZE);
        for (i, v) in f2.data_mut().iter_mut().enumerate() {
            *v = (i % 13) as f64 * 0.1;
        }
        assert_eq!(fuse(&IlluminationField::default(), &f2).unwrap(), f2);
        let zero = ScalarMap::new(FEATURE_SIZE, FEATURE_SIZE);
        let mut field = IlluminationField::filled(3.0);
        field.values[7] = 0.5;
        assert!(fuse(&field, &zero).unwrap().data().iter().all(|&v| v == 0.0));

        let mut m = IlluminationField::default();
        m.values[0] = 2.0;
        let mut f = ScalarMap::new(FEATURE_SIZE, FEATURE_SIZE);
        f.data_mut()[0] = 0.3;
        assert_eq!(fuse(&m, &f).unwrap().data()[0], 0.6);
    }

    #[test]
    fn fuse_rejects_wrong_shape() {
        assert!(fuse(&IlluminationField::default(), &ScalarMap::new(10, 10)).is_err());
    }

    #[test]
    fn modulate_identity_zero_and_half() {
        let mut img = ImageRgb::new(7, 5);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i % 10) as f64 / 10.0;
        }
        let one = ScalarMap::filled(FEATURE_SIZE, FEATURE_SIZE, 1.0);
        assert_eq!(modulate(&one, &img), img);
        let zero = ScalarMap::new(FEATURE_SIZE, FEATURE_SIZE);
        assert!(modulate(&zero, &img).data().iter().all(|&v| v == 0.0));

        let half = ScalarMap::filled(FEATURE_SIZE, FEATURE_SIZE, 0.5);
        let px = ImageRgb::filled(2, 2, [0.4, 0.8, 0.2]);
        assert_eq!(modulate(&half, &px).get(1, 1), [0.2, 0.4, 0.1]);
    }

    #[test]
    fn projection_keeps_entries_positive() {
        let mut f = IlluminationField::default();
        f.values[0] = -1.0;
        f.values[1] = f64::NAN;
        f.project();
        assert_eq!(f.values[0], FIELD_FLOOR);
        assert_eq!(f.values[1], FIELD_FLOOR);
        assert_eq!(f.values[2], 1.0);
    }
}
