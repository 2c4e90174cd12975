//! k-nearest-neighbour search over a uniform grid.
//!
//! Results are ordered by (squared distance, index), so ties resolve to the
//! lower index. Clouds below [`EXHAUSTIVE_THRESHOLD`] points are scanned
//! exhaustively.

use super::scene::Point;
use crate::{Error, Result};

pub const EXHAUSTIVE_THRESHOLD: usize = 1000;

const TARGET_PER_CELL: f64 = 4.0;

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
struct Grid {
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    /// Start offsets into `items` per cell, length = cells + 1.
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn build(points: &[Point]) -> Grid {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-9)).collect();
        // Cell size from the occupied volume; flat clouds degrade to the area.
        let n = points.len() as f64;
        let vol = ext[0] * ext[1] * ext[2];
        let mut cell = (vol * TARGET_PER_CELL / n).cbrt();
        let min_ext = ext.iter().cloned().fold(f64::INFINITY, f64::min);
        if cell > min_ext * 4.0 || !cell.is_finite() || cell <= 0.0 {
            let area = ext[0] * ext[1];
            cell = (area * TARGET_PER_CELL / n).sqrt().max(1e-6);
        }
        let max_cells = points.len().max(1) * 8;
        let dims = loop {
            let d = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).max(1));
            if d[0].saturating_mul(d[1]).saturating_mul(d[2]) <= max_cells {
                break d;
            }
            cell *= 1.5;
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            starts: vec![0; ncells + 1],
            items: vec![0; points.len()],
        };
        let ids: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        for &c in &ids {
            grid.starts[c + 1] += 1;
        }
        for c in 0..ncells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in ids.iter().enumerate() {
            grid.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.dims[a] - 1)
            }
        })
    }

    #[inline]
    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.items[self.starts[f] as usize..self.starts[f + 1] as usize]
    }
}

/// Reusable KNN index over a fixed cloud.
#[derive(Debug, Clone)]
pub struct KnnIndex<'a> {
    points: &'a [Point],
    grid: Option<Grid>,
}

impl<'a> KnnIndex<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        let grid = (points.len() >= EXHAUSTIVE_THRESHOLD).then(|| Grid::build(points));
        KnnIndex { points, grid }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest points to `center`, nearest first.
    pub fn query(&self, center: &Point, k: usize) -> Result<Vec<usize>> {
        if k > self.points.len() {
            return Err(Error::data(format!(
                "knn: k = {k} exceeds the {} available points",
                self.points.len()
            )));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best = match &self.grid {
            None => self.exhaustive(center, k),
            Some(g) => self.grid_search(g, center, k),
        };
        best.truncate(k);
        Ok(best.into_iter().map(|(_, i)| i).collect())
    }

    fn exhaustive(&self, center: &Point, k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (dist2(p, center), i))
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp_pair);
            all.truncate(k);
        }
        all.sort_unstable_by(cmp_pair);
        all
    }

    fn grid_search(&self, g: &Grid, center: &Point, k: usize) -> Vec<(f64, usize)> {
        let c = g.cell_of(center);
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(k * 4);
        let max_r = g.dims.iter().copied().max().unwrap_or(1);
        for r in 0..=max_r {
            visit_ring(g, c, r, |cell| {
                for &i in g.cell_items(cell) {
                    let i = i as usize;
                    cand.push((dist2(&self.points[i], center), i));
                }
            });
            if cand.len() >= k {
                cand.select_nth_unstable_by(k - 1, cmp_pair);
                cand.truncate(k);
                let kth = cand.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
                // Everything outside the scanned box is at least `bound` away.
                let bound = scanned_bound(g, c, r, center);
                if kth < bound * bound {
                    break;
                }
            }
        }
        cand.sort_unstable_by(cmp_pair);
        cand
    }
}

fn cmp_pair(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Minimum distance from `p` to any cell outside the box of Chebyshev radius
/// `r` around `c`. Infinite once the box covers the whole grid.
fn scanned_bound(g: &Grid, c: [usize; 3], r: usize, p: &Point) -> f64 {
    let mut bound = f64::INFINITY;
    for a in 0..3 {
        let lo_cell = c[a] as isize - r as isize;
        let hi_cell = c[a] + r + 1;
        if lo_cell > 0 {
            let face = g.origin[a] + lo_cell as f64 * g.cell;
            bound = bound.min((p[a] - face).max(0.0));
        }
        if hi_cell < g.dims[a] {
            let face = g.origin[a] + hi_cell as f64 * g.cell;
            bound = bound.min((face - p[a]).max(0.0));
        }
    }
    bound
}

/// Calls `f` for every in-grid cell at Chebyshev distance exactly `r` from `c`.
fn visit_ring(g: &Grid, c: [usize; 3], r: usize, mut f: impl FnMut([usize; 3])) {
    let r = r as isize;
    let range = |a: usize| {
        let lo = (c[a] as isize - r).max(0);
        let hi = (c[a] as isize + r).min(g.dims[a] as isize - 1);
        (lo, hi)
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let (z0, z1) = range(2);
    for z in z0..=z1 {
        let dz = (z - c[2] as isize).abs();
        for y in y0..=y1 {
            let dy = (y - c[1] as isize).abs();
            if dz == r || dy == r {
                for x in x0..=x1 {
                    f([x as usize, y as usize, z as usize]);
                }
            } else {
                for x in [c[0] as isize - r, c[0] as isize + r] {
                    if x >= x0 && x <= x1 {
                        f([x as usize, y as usize, z as usize]);
                    }
                    if r == 0 {
                        break;
                    }
                }
            }
        }
    }
}

/// Indices of the `k` nearest points to `center`; ties go to the lower index.
pub fn knn(points: &[Point], center: &Point, k: usize) -> Result<Vec<usize>> {
    KnnIndex::new(points).query(center, k)
}
