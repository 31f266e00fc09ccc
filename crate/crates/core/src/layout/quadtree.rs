//! Barnes–Hut quadtree for the repulsive term.

use crate::cnf::splitmix64;

const MAX_DEPTH: u32 = 48;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Cell {
    x0: f64,
    y0: f64,
    size: f64,
    mass: f64,
    cx: f64,
    cy: f64,
    children: [u32; 4],
    /// Leaf bucket range in `QuadTree::order`; empty for inner cells.
    start: u32,
    end: u32,
}

/// Built from scratch for every iteration; cells are stored in an arena.
#[derive(Debug, Default)]
pub struct QuadTree {
    cells: Vec<Cell>,
    order: Vec<u32>,
    scratch: Vec<u32>,
    stack: Vec<u32>,
}

impl QuadTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(&mut self, points: &[[f64; 2]]) {
        self.cells.clear();
        self.order.clear();
        self.order.extend(0..points.len() as u32);
        self.scratch.clear();
        self.scratch.resize(points.len(), 0);
        if points.is_empty() {
            return;
        }
        let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            minx = minx.min(p[0]);
            miny = miny.min(p[1]);
            maxx = maxx.max(p[0]);
            maxy = maxy.max(p[1]);
        }
        let size = (maxx - minx).max(maxy - miny).max(1e-12) * (1.0 + 1e-9);
        let n = points.len() as u32;
        self.build_cell(points, minx, miny, size, 0, n, 0);
    }

    #[allow(clippy::too_many_arguments)]
    fn build_cell(&mut self, points: &[[f64; 2]], x0: f64, y0: f64, size: f64, start: u32, end: u32, depth: u32) -> u32 {
        let id = self.cells.len() as u32;
        let (mut mass, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for &i in &self.order[start as usize..end as usize] {
            let p = points[i as usize];
            mass += 1.0;
            sx += p[0];
            sy += p[1];
        }
        self.cells.push(Cell {
            x0,
            y0,
            size,
            mass,
            cx: sx / mass,
            cy: sy / mass,
            children: [NONE; 4],
            start,
            end,
        });
        if end - start <= 1 || depth >= MAX_DEPTH {
            return id;
        }
        let half = size / 2.0;
        let (mx, my) = (x0 + half, y0 + half);
        let quadrant = |p: [f64; 2]| (p[0] >= mx) as usize + 2 * (p[1] >= my) as usize;

        // Stable counting sort of the bucket into quadrants.
        let (s, e) = (start as usize, end as usize);
        self.scratch[s..e].copy_from_slice(&self.order[s..e]);
        let mut counts = [0u32; 4];
        for &i in &self.scratch[s..e] {
            counts[quadrant(points[i as usize])] += 1;
        }
        let mut offsets = [start; 4];
        for q in 1..4 {
            offsets[q] = offsets[q - 1] + counts[q - 1];
        }
        let bounds = offsets;
        for k in s..e {
            let i = self.scratch[k];
            let q = quadrant(points[i as usize]);
            self.order[offsets[q] as usize] = i;
            offsets[q] += 1;
        }
        let mut children = [NONE; 4];
        for q in 0..4 {
            if counts[q] == 0 {
                continue;
            }
            let cx0 = if q & 1 == 1 { mx } else { x0 };
            let cy0 = if q & 2 == 2 { my } else { y0 };
            children[q] = self.build_cell(points, cx0, cy0, half, bounds[q], bounds[q] + counts[q], depth + 1);
        }
        let cell = &mut self.cells[id as usize];
        cell.children = children;
        cell.start = 0;
        cell.end = 0;
        id
    }

    /// Body ids in tree order; neighbours in space are neighbours here.
    pub fn bodies(&self) -> &[u32] {
        &self.order
    }

    /// Adds `strength * mass / d` along the separation to `force` for every
    /// body or far-away cell acting on body `i`.
    pub fn repulsion(&mut self, points: &[[f64; 2]], i: u32, theta: f64, strength: f64, force: &mut [f64; 2]) {
        if self.cells.is_empty() {
            return;
        }
        let p = points[i as usize];
        self.stack.clear();
        self.stack.push(0);
        while let Some(c) = self.stack.pop() {
            let cell = &self.cells[c as usize];
            let is_leaf = cell.children == [NONE; 4];
            if is_leaf {
                for &j in &self.order[cell.start as usize..cell.end as usize] {
                    if j != i {
                        let q = points[j as usize];
                        push_away(p, q, 1.0, strength, pair_salt(i, j), force);
                    }
                }
                continue;
            }
            let inside = p[0] >= cell.x0
                && p[0] < cell.x0 + cell.size
                && p[1] >= cell.y0
                && p[1] < cell.y0 + cell.size;
            let dx = p[0] - cell.cx;
            let dy = p[1] - cell.cy;
            // size / d < theta, without the square root
            if !inside && cell.size * cell.size < theta * theta * (dx * dx + dy * dy) {
                push_away(p, [cell.cx, cell.cy], cell.mass, strength, pair_salt(i, c ^ 0x8000_0000), force);
            } else {
                self.stack.extend(cell.children.iter().copied().filter(|&ch| ch != NONE));
            }
        }
    }
}

fn pair_salt(a: u32, b: u32) -> u64 {
    splitmix64(((a as u64) << 32) | b as u64)
}

/// Minimum separation treated as distinct; closer points get a fixed
/// pseudo-random direction derived from `salt`.
pub(crate) const MIN_DISTANCE: f64 = 1e-9;

pub(crate) fn push_away(p: [f64; 2], q: [f64; 2], mass: f64, strength: f64, salt: u64, force: &mut [f64; 2]) {
    let mut dx = p[0] - q[0];
    let mut dy = p[1] - q[1];
    let mut d2 = dx * dx + dy * dy;
    if d2 < MIN_DISTANCE * MIN_DISTANCE {
        let angle = (salt >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
        dx = angle.cos() * MIN_DISTANCE;
        dy = angle.sin() * MIN_DISTANCE;
        d2 = MIN_DISTANCE * MIN_DISTANCE;
    }
    // (dx, dy) / d * strength * mass / d
    let f = strength * mass / d2;
    force[0] += dx * f;
    force[1] += dy * f;
}
