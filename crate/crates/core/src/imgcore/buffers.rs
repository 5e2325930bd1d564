use crate::error::{Error, Result};

/// Row-major RGB image, three interleaved `f64` channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    /// A black image.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    /// Wraps an interleaved buffer, rejecting wrong lengths and non-finite values.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {width}x{height} RGB image, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers must keep every value finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Extracts one channel as a planar buffer.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Single-channel per-pixel map (ranks, per-pixel losses, feature maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "map must be at least 1x1");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Per-pixel 3-vectors with a validity mask. Valid entries are unit length
/// unless the map was built with [`NormalMap::from_raw`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

/// Allowed deviation of a valid normal from unit length.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

impl NormalMap {
    /// A map with every pixel invalid.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "map must be at least 1x1");
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Builds a map without checking unit length. Used for test fixtures and
    /// for intermediate, not-yet-normalized buffers.
    pub fn from_raw(width: usize, height: usize, data: Vec<[f64; 3]>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height || valid.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "normal map buffers do not match {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.data[i])
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, n: [f64; 3]) {
        let i = y * self.width + x;
        self.data[i] = n;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.data[i] = [0.0; 3];
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// True when every valid entry is unit length within [`UNIT_NORM_TOLERANCE`].
    pub fn is_unit(&self) -> bool {
        self.data.iter().zip(&self.valid).filter(|(_, &v)| v).all(|(n, _)| {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            (len - 1.0).abs() <= UNIT_NORM_TOLERANCE
        })
    }
}

/// BT.601 luma.
pub fn luminance(img: &ImageRgb) -> ScalarMap {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    ScalarMap {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Midpoint percentile rank of every pixel within the whole map:
/// `(count_less + 0.5 * count_equal) / N`. Ties share a rank and the mean
/// rank is exactly one half.
pub fn cdf_rank(lum: &ScalarMap) -> ScalarMap {
    let n = lum.data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lum.data[a].total_cmp(&lum.data[b]));

    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let v = lum.data[order[start]];
        let mut end = start + 1;
        while end < n && lum.data[order[end]] == v {
            end += 1;
        }
        let equal = end - start;
        let p = (start as f64 + 0.5 * equal as f64) / n as f64;
        for &i in &order[start..end] {
            ranks[i] = p;
        }
        start = end;
    }
    ScalarMap {
        width: lum.width,
        height: lum.height,
        data: ranks,
    }
}

/// Per-pixel mean absolute difference across the three channels.
pub fn l1_map(a: &ImageRgb, b: &ImageRgb) -> Result<ScalarMap> {
    crate::error::check_dims(a.dims(), b.dims())?;
    let data = a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| ((p[0] - q[0]).abs() + (p[1] - q[1]).abs() + (p[2] - q[2]).abs()) / 3.0)
        .collect();
    Ok(ScalarMap {
        width: a.width(),
        height: a.height(),
        data,
    })
}

/// Reverse pass of [`l1_map`]: gradient with respect to `a` given a per-pixel
/// upstream gradient. The gradient with respect to `b` is the negation.
/// Subgradient convention: `sign(0) = 0`.
pub fn l1_map_backward(a: &ImageRgb, b: &ImageRgb, upstream: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; a.data().len()];
    for (i, g) in upstream.iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            grad[k] = sign(a.data()[k] - b.data()[k]) * g / 3.0;
        }
    }
    grad
}

#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luminance_examples() {
        let gray = luminance(&ImageRgb::filled(3, 2, [0.5; 3]));
        assert!(gray.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let black = luminance(&ImageRgb::new(2, 2));
        assert!(black.data().iter().all(|&v| v == 0.0));
        let red = luminance(&ImageRgb::filled(1, 1, [1.0, 0.0, 0.0]));
        assert_eq!(red.data()[0], 0.299);
    }

    #[test]
    fn rank_examples() {
        let constant = cdf_rank(&ScalarMap::filled(4, 3, 0.7));
        assert!(constant.data().iter().all(|&p| p == 0.5));

        let two = cdf_rank(&ScalarMap::from_vec(2, 1, vec![0.0, 1.0]).unwrap());
        assert_eq!(two.data(), &[0.25, 0.75]);

        let four = cdf_rank(&ScalarMap::from_vec(2, 2, vec![0.1, 0.2, 0.2, 0.9]).unwrap());
        assert_eq!(four.data(), &[0.125, 0.5, 0.5, 0.875]);
    }

    #[test]
    fn l1_examples() {
        let a = ImageRgb::filled(2, 2, [0.2, 0.4, 0.6]);
        let b = ImageRgb::filled(2, 2, [0.1, 0.1, 0.1]);
        let m = l1_map(&a, &b).unwrap();
        assert!(m.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert!(l1_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));

        let mut one = ImageRgb::new(2, 1);
        one.set(1, 0, [1.0; 3]);
        let m = l1_map(&one, &ImageRgb::new(2, 1)).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0]);
    }

    #[test]
    fn l1_rejects_mismatch() {
        let err = l1_map(&ImageRgb::new(2, 2), &ImageRgb::new(3, 2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(ImageRgb::from_vec(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(ImageRgb::from_vec(1, 1, vec![0.0; 4]).is_err());
    }
}
