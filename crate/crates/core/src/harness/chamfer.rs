use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Cells per axis are capped at this many.
const MAX_CELLS_PER_AXIS: usize = 64;
/// Target mean occupancy of a grid cell.
const POINTS_PER_CELL: f64 = 2.0;

fn dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Uniform grid over a point set answering exact nearest-neighbour queries.
pub struct PointGrid<'a> {
    points: &'a [Vector3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let span = hi - lo;
        let volume = span.iter().map(|s| s.max(1e-12)).product::<f64>();
        let mut cell = (volume * POINTS_PER_CELL / points.len() as f64).cbrt();
        let max_span = span.max();
        if max_span > 0.0 {
            cell = cell.max(max_span / MAX_CELLS_PER_AXIS as f64);
        }
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|k| ((span[k] / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        Ok(grid)
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            c.clamp(0.0, (self.dims[k] - 1) as f64) as usize
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Distance from `q` to the nearest stored point.
    pub fn nearest(&self, q: &Vector3<f64>) -> f64 {
        let c = self.cell_of(q);
        let max_r = (0..3).map(|k| c[k].max(self.dims[k] - 1 - c[k])).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in 0..=max_r {
            let lo = c.map(|v| v as isize - r as isize);
            let hi = c.map(|v| v as isize + r as isize);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    let on_shell_yz = z == lo[2] || z == hi[2] || y == lo[1] || y == hi[1];
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                        if !on_shell_yz && x != lo[0] && x != hi[0] {
                            continue;
                        }
                        let k = self.flat([x as usize, y as usize, z as usize]);
                        for &i in &self.order[self.starts[k]..self.starts[k + 1]] {
                            best = best.min(dist(q, &self.points[i]));
                        }
                    }
                }
            }
            if best <= self.clearance(q, c, r) {
                break;
            }
        }
        best
    }

    /// Lower bound on the distance from `q` to any cell outside the block of
    /// half-width `r` around `c`.
    fn clearance(&self, q: &Vector3<f64>, c: [usize; 3], r: usize) -> f64 {
        let mut m = f64::INFINITY;
        for k in 0..3 {
            let below = c[k] as isize - r as isize;
            let above = c[k] + r + 1;
            if below > 0 {
                let face = self.origin[k] + below as f64 * self.cell;
                m = m.min(q[k] - face);
            }
            if above < self.dims[k] {
                let face = self.origin[k] + above as f64 * self.cell;
                m = m.min(face - q[k]);
            }
        }
        m.max(0.0)
    }
}

fn mean_nearest(from: &[Vector3<f64>], to: &PointGrid) -> f64 {
    from.iter().map(|p| to.nearest(p)).sum::<f64>() / from.len() as f64
}

/// Symmetric mean nearest-neighbour distance between two point sets.
pub fn chamfer(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<f64> {
    let gp = PointGrid::new(p)?;
    let gq = PointGrid::new(q)?;
    Ok(0.5 * (mean_nearest(p, &gq) + mean_nearest(q, &gp)))
}

/// All-pairs reference evaluation of [`chamfer`].
pub fn chamfer_brute_force(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let one_way = |a: &[Vector3<f64>], b: &[Vector3<f64>]| {
        a.iter()
            .map(|x| b.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64
    };
    Ok(0.5 * (one_way(p, q) + one_way(q, p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_examples() {
        let o = Vector3::zeros();
        let x1 = Vector3::new(1.0, 0.0, 0.0);
        let x2 = Vector3::new(2.0, 0.0, 0.0);
        assert_eq!(chamfer(&[o], &[x1]).unwrap(), 1.0);
        assert_eq!(chamfer(&[o, x2], &[x1]).unwrap(), 1.0);
        assert_eq!(chamfer(&[o, x1, x2], &[o, x1, x2]).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert!(matches!(chamfer(&[], &[Vector3::zeros()]), Err(Error::EmptyPointSet)));
        assert!(matches!(chamfer(&[Vector3::zeros()], &[]), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn matches_brute_force_on_clustered_and_flat_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat: Vec<_> = (0..300).map(|_| Vector3::new(rng.random(), rng.random(), 0.0)).collect();
        let far: Vec<_> = (0..40)
            .map(|_| Vector3::new(rng.random_range(5.0..6.0), rng.random(), rng.random_range(-3.0..3.0)))
            .collect();
        assert_eq!(chamfer(&flat, &far).unwrap(), chamfer_brute_force(&flat, &far).unwrap());
        let dup = vec![Vector3::new(1.0, 1.0, 1.0); 5];
        assert_eq!(chamfer(&dup, &flat).unwrap(), chamfer_brute_force(&dup, &flat).unwrap());
    }
}
