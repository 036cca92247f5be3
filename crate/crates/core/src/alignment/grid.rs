//! Uniform bucket grid over a fixed 2-D point set.
//!
//! Answers nearest-neighbour and fixed-radius queries for arbitrary query
//! locations, including ones outside the bounding box of the indexed points.

#[derive(Clone, Debug)]
pub struct PointGrid {
    origin: [f64; 2],
    cell: f64,
    nx: i64,
    ny: i64,
    /// CSR layout: points of cell `c` are `entries[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    entries: Vec<Entry>,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    x: f64,
    y: f64,
    index: u32,
}

impl PointGrid {
    /// Panics on an empty point set.
    pub fn new(points: &[[f64; 2]]) -> Self {
        assert!(!points.is_empty(), "cannot index an empty point set");
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
            max_x = max_x.max(p[0]);
            max_y = max_y.max(p[1]);
        }
        let w = (max_x - min_x).max(1.0);
        let h = (max_y - min_y).max(1.0);
        // about one point per cell
        let cell = (w * h / points.len() as f64).sqrt().max(1.0);
        let nx = (w / cell).floor() as i64 + 1;
        let ny = (h / cell).floor() as i64 + 1;

        let mut grid = Self {
            origin: [min_x, min_y],
            cell,
            nx,
            ny,
            starts: vec![0; (nx * ny + 1) as usize],
            entries: Vec::with_capacity(points.len()),
        };
        let cells: Vec<usize> = points
            .iter()
            .map(|p| {
                let (cx, cy) = grid.cell_of(p[0], p[1]);
                (cy.clamp(0, ny - 1) * nx + cx.clamp(0, nx - 1)) as usize
            })
            .collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 0..(nx * ny) as usize {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| (cells[i], i));
        grid.entries = order
            .into_iter()
            .map(|i| Entry {
                x: points[i][0],
                y: points[i][1],
                index: i as u32,
            })
            .collect();
        grid
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.cell).floor() as i64,
            ((y - self.origin[1]) / self.cell).floor() as i64,
        )
    }

    fn bucket(&self, cx: i64, cy: i64) -> &[Entry] {
        let c = (cy * self.nx + cx) as usize;
        &self.entries[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    /// Squared distance to the nearest indexed point and that point's index.
    /// Ties resolve to the lower index.
    pub fn nearest(&self, x: f64, y: f64) -> (f64, usize) {
        let (qx, qy) = self.cell_of(x, y);
        let mut best = (f64::INFINITY, usize::MAX);
        // distance (in cells) from the query cell to the farthest grid cell
        let reach = [qx, self.nx - 1 - qx, qy, self.ny - 1 - qy]
            .iter()
            .map(|d| d.abs())
            .max()
            .unwrap_or(0)
            + 1;
        // first ring that can contain a grid cell
        let start = [-qx, qx - (self.nx - 1), -qy, qy - (self.ny - 1)]
            .into_iter()
            .max()
            .unwrap_or(0)
            .max(0);
        // distance from the query to the nearest side of its own cell
        let fx = x - (self.origin[0] + qx as f64 * self.cell);
        let fy = y - (self.origin[1] + qy as f64 * self.cell);
        let margin = fx.min(self.cell - fx).min(fy).min(self.cell - fy).max(0.0);
        for r in start..=reach {
            // anything in ring r lies at least this far away
            if r >= 1 {
                let bound = (r - 1) as f64 * self.cell + margin;
                if best.0 < bound * bound {
                    break;
                }
            }
            self.visit_ring(qx, qy, r, |e| {
                let d2 = (e.x - x).powi(2) + (e.y - y).powi(2);
                let idx = e.index as usize;
                if d2 < best.0 || (d2 == best.0 && idx < best.1) {
                    best = (d2, idx);
                }
            });
        }
        best
    }

    /// Indices of all points within `radius` (inclusive) of the query, with
    /// their Euclidean distances, in unspecified order.
    pub fn within(&self, x: f64, y: f64, radius: f64, out: &mut Vec<(f64, usize)>) {
        out.clear();
        let (x0, y0) = self.cell_of(x - radius, y - radius);
        let (x1, y1) = self.cell_of(x + radius, y + radius);
        let r2 = radius * radius;
        for cy in y0.max(0)..=y1.min(self.ny - 1) {
            for cx in x0.max(0)..=x1.min(self.nx - 1) {
                for e in self.bucket(cx, cy) {
                    let d2 = (e.x - x).powi(2) + (e.y - y).powi(2);
                    if d2 <= r2 {
                        out.push((d2.sqrt(), e.index as usize));
                    }
                }
            }
        }
    }

    fn visit_ring(&self, qx: i64, qy: i64, r: i64, mut f: impl FnMut(&Entry)) {
        let xr = (qx - r).max(0)..=(qx + r).min(self.nx - 1);
        if r == 0 {
            if (0..self.nx).contains(&qx) && (0..self.ny).contains(&qy) {
                self.bucket(qx, qy).iter().for_each(&mut f);
            }
            return;
        }
        for cy in [qy - r, qy + r] {
            if (0..self.ny).contains(&cy) {
                for cx in xr.clone() {
                    self.bucket(cx, cy).iter().for_each(&mut f);
                }
            }
        }
        for cx in [qx - r, qx + r] {
            if (0..self.nx).contains(&cx) {
                for cy in (qy - r + 1).max(0)..=(qy + r - 1).min(self.ny - 1) {
                    self.bucket(cx, cy).iter().for_each(&mut f);
                }
            }
        }
    }
}

/// Nearest-neighbour lookup tuned for many queries against one point set.
///
/// A fine raster over the (padded) bounding box stores, per raster cell, the
/// few points that can be nearest to any location in that cell. Queries
/// falling outside the raster use the bucket grid.
#[derive(Clone, Debug)]
pub struct NearestLookup {
    grid: PointGrid,
    points: Vec<[f64; 2]>,
    origin: [f64; 2],
    inv_step: f64,
    nx: i64,
    ny: i64,
    starts: Vec<u32>,
    candidates: Vec<u32>,
}

/// Upper bound on raster cells per point set.
const MAX_RASTER_CELLS: f64 = 65536.0;

impl NearestLookup {
    /// Panics on an empty point set.
    pub fn new(points: &[[f64; 2]], padding: f64) -> Self {
        let grid = PointGrid::new(points);
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
            max_x = max_x.max(p[0]);
            max_y = max_y.max(p[1]);
        }
        let origin = [min_x - padding, min_y - padding];
        let w = max_x - min_x + 2.0 * padding;
        let h = max_y - min_y + 2.0 * padding;
        let step = (grid.cell / 8.0).max((w * h / MAX_RASTER_CELLS).sqrt()).max(1e-3);
        let nx = (w / step).ceil().max(1.0) as i64;
        let ny = (h / step).ceil().max(1.0) as i64;

        let half_diagonal = step * std::f64::consts::FRAC_1_SQRT_2;
        let mut starts = Vec::with_capacity((nx * ny + 1) as usize);
        let mut candidates = Vec::new();
        let mut near = Vec::new();
        starts.push(0);
        for cy in 0..ny {
            for cx in 0..nx {
                let c = [
                    origin[0] + (cx as f64 + 0.5) * step,
                    origin[1] + (cy as f64 + 0.5) * step,
                ];
                // any location in the cell is within half a diagonal of the
                // centre, so its nearest point lies within this radius of it
                let d = grid.nearest(c[0], c[1]).0.sqrt();
                let radius = d + 2.0 * half_diagonal + 1e-6 * (1.0 + d);
                grid.within(c[0], c[1], radius, &mut near);
                candidates.extend(near.iter().map(|&(_, i)| i as u32));
                starts.push(candidates.len() as u32);
            }
        }
        Self {
            grid,
            points: points.to_vec(),
            origin,
            inv_step: 1.0 / step,
            nx,
            ny,
            starts,
            candidates,
        }
    }

    pub fn grid(&self) -> &PointGrid {
        &self.grid
    }

    /// Same result as `PointGrid::nearest`.
    #[inline]
    pub fn nearest(&self, x: f64, y: f64) -> (f64, usize) {
        let cx = ((x - self.origin[0]) * self.inv_step).floor();
        let cy = ((y - self.origin[1]) * self.inv_step).floor();
        if !(cx >= 0.0 && cy >= 0.0 && cx < self.nx as f64 && cy < self.ny as f64) {
            return self.grid.nearest(x, y);
        }
        let c = cy as usize * self.nx as usize + cx as usize;
        let mut best = (f64::INFINITY, usize::MAX);
        for &i in &self.candidates[self.starts[c] as usize..self.starts[c + 1] as usize] {
            let p = self.points[i as usize];
            let d2 = (p[0] - x).powi(2) + (p[1] - y).powi(2);
            let i = i as usize;
            if d2 < best.0 || (d2 == best.0 && i < best.1) {
                best = (d2, i);
            }
        }
        best
    }
}
