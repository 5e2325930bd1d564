use rayon::prelude::*;

use super::camera::Camera;
use super::gaussian::{CloudGrad, GaussianCloud};
use super::project::{project, project_backward, GaussianGrad, Projected, ProjectedGrad};
use crate::error::{check_dims, Error, Result};
use crate::imgcore::{ImageRgb, NormalMap, ScalarMap};

pub const TILE_SIZE: usize = 16;
pub const ALPHA_MAX: f64 = 0.999;
/// Compositing stops before transmittance would fall below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Coverage above which the normal channel is defined.
pub const NORMAL_ALPHA: f64 = 0.5;

/// Rendered channels of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: ImageRgb,
    /// Alpha-blended camera-space depth.
    pub depth: ScalarMap,
    /// Camera-space unit normals, valid where alpha exceeds [`NORMAL_ALPHA`].
    pub normal: NormalMap,
    pub alpha: ScalarMap,
}

/// Upstream gradient on every channel of a [`RenderOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrad {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB.
    pub color: Vec<f64>,
    pub depth: Vec<f64>,
    /// On the unit normal; ignored where the normal is invalid.
    pub normal: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl RenderGrad {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            color: vec![0.0; 3 * n],
            depth: vec![0.0; n],
            normal: vec![[0.0; 3]; n],
            alpha: vec![0.0; n],
        }
    }
}

struct TileRecord {
    /// Gaussian indices touching the tile, front to back.
    list: Vec<u32>,
    /// Per pixel of the tile, positions into `list` that contributed.
    offsets: Vec<u32>,
    contrib: Vec<u32>,
}

/// Forward intermediates needed by [`rasterize_backward`].
pub struct RenderRecord {
    fingerprint: u64,
    camera: Camera,
    projected: Vec<Option<Projected>>,
    tiles: Vec<TileRecord>,
    raw_normal: Vec<[f64; 3]>,
}

impl RenderRecord {
    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn projected(&self) -> &[Option<Projected>] {
        &self.projected
    }

    /// Number of (pixel, Gaussian) blending events.
    pub fn contributions(&self) -> usize {
        self.tiles.iter().map(|t| t.contrib.len()).sum()
    }
}

struct TileGeometry {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn tile_grid(w: usize, h: usize) -> (usize, usize) {
    (w.div_ceil(TILE_SIZE), h.div_ceil(TILE_SIZE))
}

fn tile_geometry(t: usize, w: usize, h: usize) -> TileGeometry {
    let tw = tile_grid(w, h).0;
    let (tx, ty) = (t % tw, t / tw);
    TileGeometry {
        x0: tx * TILE_SIZE,
        y0: ty * TILE_SIZE,
        x1: ((tx + 1) * TILE_SIZE).min(w),
        y1: ((ty + 1) * TILE_SIZE).min(h),
    }
}

/// Inclusive pixel range whose centres lie inside `[c - e, c + e]`.
fn pixel_span(c: f64, e: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (c - e - 0.5).ceil().max(0.0);
    let hi = (c + e - 0.5).floor().min(n as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Opacity-weighted Gaussian falloff at a pixel centre, before clipping.
/// `None` outside the support box.
#[inline]
fn falloff(p: &Projected, px: usize, py: usize) -> Option<(f64, f64, f64, f64)> {
    let dx = px as f64 + 0.5 - p.mean[0];
    let dy = py as f64 + 0.5 - p.mean[1];
    if dx.abs() > p.extent[0] || dy.abs() > p.extent[1] {
        return None;
    }
    let [a, b, c] = p.conic;
    let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
    if power > 0.0 {
        return None;
    }
    let g = power.exp();
    Some((dx, dy, g, p.opacity * g))
}

fn bin_tiles(projected: &[Option<Projected>], w: usize, h: usize) -> Vec<Vec<u32>> {
    let (tw, th) = tile_grid(w, h);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tw * th];
    for (i, p) in projected.iter().enumerate() {
        let Some(p) = p else { continue };
        let (Some((x0, x1)), Some((y0, y1))) =
            (pixel_span(p.mean[0], p.extent[0], w), pixel_span(p.mean[1], p.extent[1], h))
        else {
            continue;
        };
        for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
            for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                bins[ty * tw + tx].push(i as u32);
            }
        }
    }
    for bin in &mut bins {
        bin.sort_by(|&a, &b| {
            let (da, db) = (projected[a as usize].unwrap().depth, projected[b as usize].unwrap().depth);
            da.total_cmp(&db).then(a.cmp(&b))
        });
    }
    bins
}

struct TileOut {
    record: TileRecord,
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    normal: Vec<[f64; 3]>,
    alpha: Vec<f64>,
}

fn render_tile(list: Vec<u32>, geo: &TileGeometry, projected: &[Option<Projected>]) -> TileOut {
    let n_px = (geo.x1 - geo.x0) * (geo.y1 - geo.y0);
    let mut out = TileOut {
        record: TileRecord {
            list,
            offsets: Vec::with_capacity(n_px + 1),
            contrib: Vec::new(),
        },
        color: Vec::with_capacity(n_px),
        depth: Vec::with_capacity(n_px),
        normal: Vec::with_capacity(n_px),
        alpha: Vec::with_capacity(n_px),
    };
    out.record.offsets.push(0);
    for py in geo.y0..geo.y1 {
        for px in geo.x0..geo.x1 {
            let mut t = 1.0;
            let mut c = [0.0; 3];
            let mut d = 0.0;
            let mut n = [0.0; 3];
            for (pos, &gi) in out.record.list.iter().enumerate() {
                let p = projected[gi as usize].as_ref().unwrap();
                let Some((_, _, _, raw)) = falloff(p, px, py) else { continue };
                let alpha = raw.min(ALPHA_MAX);
                let next_t = t * (1.0 - alpha);
                if next_t < MIN_TRANSMITTANCE {
                    break;
                }
                let wgt = alpha * t;
                for k in 0..3 {
                    c[k] += wgt * p.color[k];
                    n[k] += wgt * p.normal[k];
                }
                d += wgt * p.depth;
                out.record.contrib.push(pos as u32);
                t = next_t;
            }
            out.record.offsets.push(out.record.contrib.len() as u32);
            out.color.push(c);
            out.depth.push(d);
            out.normal.push(n);
            out.alpha.push(1.0 - t);
        }
    }
    out
}

/// Renders every channel and keeps the record needed for the reverse pass.
pub fn rasterize(cloud: &GaussianCloud, cam: &Camera) -> Result<(RenderOutput, RenderRecord)> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("cannot rasterize an empty cloud".into()));
    }
    let (w, h) = (cam.width, cam.height);
    let projected: Vec<Option<Projected>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| project(&cloud.gaussian(i), cam))
        .collect();
    let bins = bin_tiles(&projected, w, h);
    let tiles: Vec<TileOut> = bins
        .into_par_iter()
        .enumerate()
        .map(|(t, list)| render_tile(list, &tile_geometry(t, w, h), &projected))
        .collect();

    let mut color = ImageRgb::new(w, h);
    let mut depth = ScalarMap::new(w, h);
    let mut alpha = ScalarMap::new(w, h);
    let mut normal = NormalMap::new(w, h);
    let mut raw_normal = vec![[0.0; 3]; w * h];
    for (t, tile) in tiles.iter().enumerate() {
        let geo = tile_geometry(t, w, h);
        let mut k = 0;
        for y in geo.y0..geo.y1 {
            for x in geo.x0..geo.x1 {
                color.set(x, y, tile.color[k]);
                depth.set(x, y, tile.depth[k]);
                alpha.set(x, y, tile.alpha[k]);
                let n = tile.normal[k];
                raw_normal[y * w + x] = n;
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if tile.alpha[k] > NORMAL_ALPHA && len > 0.0 {
                    normal.set(x, y, [n[0] / len, n[1] / len, n[2] / len]);
                }
                k += 1;
            }
        }
    }
    let record = RenderRecord {
        fingerprint: cloud.fingerprint(),
        camera: cam.clone(),
        projected,
        tiles: tiles.into_iter().map(|t| t.record).collect(),
        raw_normal,
    };
    Ok((
        RenderOutput {
            color,
            depth,
            normal,
            alpha,
        },
        record,
    ))
}

/// Forward pass only.
pub fn render(cloud: &GaussianCloud, cam: &Camera) -> Result<RenderOutput> {
    rasterize(cloud, cam).map(|(out, _)| out)
}

fn tile_backward(
    tile: &TileRecord,
    geo: &TileGeometry,
    w: usize,
    projected: &[Option<Projected>],
    normal_valid: &[bool],
    raw_normal: &[[f64; 3]],
    grad: &RenderGrad,
) -> Vec<ProjectedGrad> {
    let mut local = vec![ProjectedGrad::default(); tile.list.len()];
    let mut alphas: Vec<(f64, f64, bool)> = Vec::new();
    let mut k = 0;
    for py in geo.y0..geo.y1 {
        for px in geo.x0..geo.x1 {
            let pix = py * w + px;
            let span = &tile.contrib[tile.offsets[k] as usize..tile.offsets[k + 1] as usize];
            k += 1;
            if span.is_empty() {
                continue;
            }
            let gc = [grad.color[3 * pix], grad.color[3 * pix + 1], grad.color[3 * pix + 2]];
            let gd = grad.depth[pix];
            let ga = grad.alpha[pix];
            let mut gn = [0.0; 3];
            if normal_valid[pix] {
                let n = raw_normal[pix];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                let u = [n[0] / len, n[1] / len, n[2] / len];
                let g = grad.normal[pix];
                let dot = u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
                for c in 0..3 {
                    gn[c] = (g[c] - u[c] * dot) / len;
                }
            }
            if gc == [0.0; 3] && gd == 0.0 && ga == 0.0 && gn == [0.0; 3] {
                continue;
            }

            // replay transmittance front to back
            alphas.clear();
            let mut t = 1.0;
            for &pos in span {
                let p = projected[tile.list[pos as usize] as usize].as_ref().unwrap();
                let (_, _, _, raw) = falloff(p, px, py).unwrap();
                let clipped = raw > ALPHA_MAX;
                let a = raw.min(ALPHA_MAX);
                alphas.push((a, t, clipped));
                t *= 1.0 - a;
            }
            let t_final = t;

            let mut suffix_c = [0.0; 3];
            let mut suffix_n = [0.0; 3];
            let mut suffix_d = 0.0;
            for (j, &pos) in span.iter().enumerate().rev() {
                let p = projected[tile.list[pos as usize] as usize].as_ref().unwrap();
                let (a, t_i, clipped) = alphas[j];
                let wgt = a * t_i;
                let lg = &mut local[pos as usize];
                let inv = 1.0 / (1.0 - a);
                let mut g_alpha = ga * t_final * inv;
                for c in 0..3 {
                    lg.color[c] += wgt * gc[c];
                    lg.normal[c] += wgt * gn[c];
                    g_alpha += gc[c] * (t_i * p.color[c] - suffix_c[c] * inv);
                    g_alpha += gn[c] * (t_i * p.normal[c] - suffix_n[c] * inv);
                }
                lg.depth += wgt * gd;
                g_alpha += gd * (t_i * p.depth - suffix_d * inv);
                for c in 0..3 {
                    suffix_c[c] += wgt * p.color[c];
                    suffix_n[c] += wgt * p.normal[c];
                }
                suffix_d += wgt * p.depth;

                if clipped {
                    continue;
                }
                let (dx, dy, g, _) = falloff(p, px, py).unwrap();
                lg.opacity += g_alpha * g;
                let g_power = g_alpha * a;
                let [ca, cb, cc] = p.conic;
                lg.mean[0] += g_power * (ca * dx + cb * dy);
                lg.mean[1] += g_power * (cb * dx + cc * dy);
                lg.conic[0] += -0.5 * g_power * dx * dx;
                lg.conic[1] += -g_power * dx * dy;
                lg.conic[2] += -0.5 * g_power * dy * dy;
            }
        }
    }
    local
}

/// Reverse pass: gradients of the scalar loss whose channel gradients are
/// `grad` with respect to every stored parameter of `cloud`.
pub fn rasterize_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    record: &RenderRecord,
    output: &RenderOutput,
    grad: &RenderGrad,
) -> Result<CloudGrad> {
    if record.fingerprint != cloud.fingerprint() || record.projected.len() != cloud.len() {
        return Err(Error::RecordMismatch("cloud parameters changed since the forward pass".into()));
    }
    if record.camera != *cam {
        return Err(Error::RecordMismatch("camera differs from the forward pass".into()));
    }
    let (w, h) = (cam.width, cam.height);
    check_dims((grad.width, grad.height), (w, h))?;
    check_dims(output.alpha.dims(), (w, h))?;
    let sizes_ok = grad.color.len() == 3 * w * h
        && grad.depth.len() == w * h
        && grad.normal.len() == w * h
        && grad.alpha.len() == w * h;
    if !sizes_ok {
        return Err(Error::InvalidArgument("render gradient buffers have inconsistent lengths".into()));
    }

    let normal_valid = output.normal.validity();
    let locals: Vec<Vec<ProjectedGrad>> = record
        .tiles
        .par_iter()
        .enumerate()
        .map(|(t, tile)| {
            tile_backward(
                tile,
                &tile_geometry(t, w, h),
                w,
                &record.projected,
                normal_valid,
                &record.raw_normal,
                grad,
            )
        })
        .collect();

    let mut per_gaussian = vec![ProjectedGrad::default(); cloud.len()];
    for (tile, local) in record.tiles.iter().zip(&locals) {
        for (pos, &gi) in tile.list.iter().enumerate() {
            per_gaussian[gi as usize].add(&local[pos]);
        }
    }

    let parts: Vec<(usize, GaussianGrad)> = per_gaussian
        .par_iter()
        .enumerate()
        .filter(|(i, pg)| record.projected[*i].is_some() && **pg != ProjectedGrad::default())
        .map(|(i, pg)| (i, project_backward(cloud, i, cam, pg)))
        .collect();
    let mut out = CloudGrad::zeros(cloud.len());
    for (i, g) in parts {
        g.scatter(i, &mut out);
    }
    Ok(out)
}
