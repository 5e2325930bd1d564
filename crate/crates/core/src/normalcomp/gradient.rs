use super::GateMask;
use crate::error::{check_dims, Result};
use crate::imgcore::{sign, NormalMap};

/// Forward-difference spatial derivatives of a normal map.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    /// `n(x+1, y) - n(x, y)`, zero in the last column.
    pub dx: Vec<[f64; 3]>,
    /// `n(x, y+1) - n(x, y)`, zero in the last row.
    pub dy: Vec<[f64; 3]>,
    /// False where the pixel or a neighbour it reads is invalid.
    pub included: Vec<bool>,
}

fn diff(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
}

pub fn normal_gradient(n: &NormalMap) -> GradientField {
    let (w, h) = n.dims();
    let valid = n.validity();
    let data = n.data();
    let mut dx = vec![[0.0; 3]; w * h];
    let mut dy = vec![[0.0; 3]; w * h];
    let mut included = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            let right_ok = x + 1 >= w || valid[i + 1];
            let down_ok = y + 1 >= h || valid[i + w];
            if !(right_ok && down_ok) {
                continue;
            }
            included[i] = true;
            if x + 1 < w {
                dx[i] = diff(data[i], data[i + 1]);
            }
            if y + 1 < h {
                dy[i] = diff(data[i], data[i + w]);
            }
        }
    }
    GradientField {
        width: w,
        height: h,
        dx,
        dy,
        included,
    }
}

/// Gradient-consistency loss and the number of sites it averaged over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientLoss {
    pub value: f64,
    pub sites: usize,
}

fn sites(fp: &GradientField, fr: &GradientField, mask: Option<&GateMask>) -> Vec<bool> {
    (0..fp.included.len())
        .map(|i| fp.included[i] && fr.included[i] && mask.is_none_or(|m| m.bits()[i]))
        .collect()
}

/// Mean over mutually included sites of the L1 distance between the six
/// derivative components of `pred` and `reference`.
pub fn gradient_loss(pred: &NormalMap, reference: &NormalMap, mask: Option<&GateMask>) -> Result<GradientLoss> {
    check_dims(pred.dims(), reference.dims())?;
    if let Some(m) = mask {
        check_dims(pred.dims(), m.dims())?;
    }
    let fp = normal_gradient(pred);
    let fr = normal_gradient(reference);
    let on = sites(&fp, &fr, mask);
    let (mut sum, mut count) = (0.0, 0);
    for (i, _) in on.iter().enumerate().filter(|(_, &b)| b) {
        for c in 0..3 {
            sum += (fp.dx[i][c] - fr.dx[i][c]).abs() + (fp.dy[i][c] - fr.dy[i][c]).abs();
        }
        count += 1;
    }
    let value = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(GradientLoss { value, sites: count })
}

/// Gradient of `upstream * gradient_loss` with respect to `pred`.
pub fn gradient_loss_backward(
    pred: &NormalMap,
    reference: &NormalMap,
    mask: Option<&GateMask>,
    upstream: f64,
) -> Result<Vec<[f64; 3]>> {
    let loss = gradient_loss(pred, reference, mask)?;
    let (w, h) = pred.dims();
    let mut grad = vec![[0.0; 3]; w * h];
    if loss.sites == 0 {
        return Ok(grad);
    }
    let fp = normal_gradient(pred);
    let fr = normal_gradient(reference);
    let on = sites(&fp, &fr, mask);
    let u = upstream / loss.sites as f64;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !on[i] {
                continue;
            }
            for c in 0..3 {
                if x + 1 < w {
                    let s = u * sign(fp.dx[i][c] - fr.dx[i][c]);
                    grad[i + 1][c] += s;
                    grad[i][c] -= s;
                }
                if y + 1 < h {
                    let s = u * sign(fp.dy[i][c] - fr.dy[i][c]);
                    grad[i + w][c] += s;
                    grad[i][c] -= s;
                }
            }
        }
    }
    Ok(grad)
}
