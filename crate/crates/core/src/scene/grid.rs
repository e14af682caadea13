use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Label of one occupancy-grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Wall,
    Furniture,
}

impl Cell {
    pub fn is_free(self) -> bool {
        self == Cell::Free
    }
}

/// 8-connected neighbour offsets; the first four are orthogonal.
pub(crate) const NEIGHBOURS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Row-major occupancy grid. Cell `(ix, iy)` covers
/// `[ix·res, (ix+1)·res) × [iy·res, (iy+1)·res)` in world meters.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    /// Builds a validated grid: positive resolution, walls on every border
    /// cell, and at least one free cell.
    pub fn new(resolution: f64, width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParam(format!("resolution {resolution} must be > 0")));
        }
        if width < 3 || height < 3 {
            return Err(Error::InvalidParam(format!("grid {width}x{height} is too small")));
        }
        if cells.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        let grid = OccupancyGrid {
            resolution,
            width,
            height,
            cells,
        };
        for ix in 0..width {
            for iy in [0, height - 1] {
                if grid.get(ix, iy) != Cell::Wall {
                    return Err(Error::InvalidParam(format!("border cell ({ix},{iy}) is not a wall")));
                }
            }
        }
        for iy in 0..height {
            for ix in [0, width - 1] {
                if grid.get(ix, iy) != Cell::Wall {
                    return Err(Error::InvalidParam(format!("border cell ({ix},{iy}) is not a wall")));
                }
            }
        }
        if !grid.cells.iter().any(|c| c.is_free()) {
            return Err(Error::InvalidParam("grid has no free cell".into()));
        }
        Ok(grid)
    }

    /// A closed rectangular room: border walls, everything else free.
    pub fn empty_room(resolution: f64, width: usize, height: usize) -> Result<Self> {
        let mut cells = vec![Cell::Free; width * height];
        for iy in 0..height {
            for ix in 0..width {
                if ix == 0 || iy == 0 || ix + 1 == width || iy + 1 == height {
                    cells[iy * width + ix] = Cell::Wall;
                }
            }
        }
        Self::new(resolution, width, height, cells)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> Cell {
        self.cells[iy * self.width + ix]
    }

    /// Cell label at signed coordinates; anything outside the grid reads as wall.
    #[inline]
    pub fn get_signed(&self, ix: isize, iy: isize) -> Cell {
        if ix < 0 || iy < 0 || ix as usize >= self.width || iy as usize >= self.height {
            Cell::Wall
        } else {
            self.cells[iy as usize * self.width + ix as usize]
        }
    }

    /// Overwrites interior cells; border cells stay walls.
    pub fn set(&mut self, ix: usize, iy: usize, cell: Cell) {
        if ix == 0 || iy == 0 || ix + 1 == self.width || iy + 1 == self.height {
            return;
        }
        let idx = self.index(ix, iy);
        self.cells[idx] = cell;
    }

    pub fn is_free(&self, ix: usize, iy: usize) -> bool {
        self.get(ix, iy).is_free()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width_m() && p.y < self.height_m()
    }

    /// The cell containing `p`, or `None` when `p` is outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        if !(p.x.is_finite() && p.y.is_finite()) || !self.contains(p) {
            return None;
        }
        let ix = ((p.x / self.resolution) as usize).min(self.width - 1);
        let iy = ((p.y / self.resolution) as usize).min(self.height - 1);
        Some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            (ix as f64 + 0.5) * self.resolution,
            (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_free_point(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some_and(|(ix, iy)| self.is_free(ix, iy))
    }

    /// Number of 8-connected components among cells satisfying `passable`.
    /// Diagonal steps require both orthogonal neighbours to be passable.
    pub fn count_components(&self, passable: impl Fn(usize) -> bool) -> usize {
        let mut label = vec![false; self.cells.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if label[start] || !passable(start) {
                continue;
            }
            components += 1;
            label[start] = true;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                for n in self.neighbours(idx, &passable) {
                    if !label[n.0] {
                        label[n.0] = true;
                        queue.push_back(n.0);
                    }
                }
            }
        }
        components
    }

    /// Passable 8-neighbours of `idx` with a flag for diagonal moves.
    /// Corner cutting is disallowed.
    pub(crate) fn neighbours<'a>(
        &'a self,
        idx: usize,
        passable: &'a impl Fn(usize) -> bool,
    ) -> impl Iterator<Item = (usize, bool)> + 'a {
        let (ix, iy) = self.coords(idx);
        let (ix, iy) = (ix as isize, iy as isize);
        let w = self.width as isize;
        let h = self.height as isize;
        let ok = move |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && passable((y * w + x) as usize);
        NEIGHBOURS.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (ix + dx, iy + dy);
            if !ok(nx, ny) {
                return None;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal && !(ok(ix + dx, iy) && ok(ix, iy + dy)) {
                return None;
            }
            Some(((ny * w + nx) as usize, diagonal))
        })
    }
}

/// Exact Euclidean distance transform (squared, in cells) from every cell to
/// the nearest cell where `is_source` holds.
pub(crate) fn squared_distance_transform(width: usize, height: usize, is_source: impl Fn(usize) -> bool) -> Vec<f64> {
    const BIG: f64 = 1e20;
    let mut grid: Vec<f64> = (0..width * height).map(|i| if is_source(i) { 0.0 } else { BIG }).collect();
    let mut buf_in = vec![0.0; width.max(height)];
    let mut buf_out = vec![0.0; width.max(height)];
    // columns then rows
    for x in 0..width {
        for y in 0..height {
            buf_in[y] = grid[y * width + x];
        }
        edt_1d(&buf_in[..height], &mut buf_out[..height]);
        for y in 0..height {
            grid[y * width + x] = buf_out[y];
        }
    }
    for y in 0..height {
        buf_in[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        edt_1d(&buf_in[..width], &mut buf_out[..width]);
        grid[y * width..(y + 1) * width].copy_from_slice(&buf_out[..width]);
    }
    grid
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_open_border() {
        let mut cells = vec![Cell::Free; 25];
        cells[12] = Cell::Free;
        assert!(OccupancyGrid::new(0.1, 5, 5, cells).is_err());
        assert!(OccupancyGrid::empty_room(0.0, 5, 5).is_err());
        assert!(OccupancyGrid::empty_room(0.1, 5, 5).is_ok());
    }

    #[test]
    fn cell_lookup() {
        let g = OccupancyGrid::empty_room(0.5, 6, 4).unwrap();
        assert_eq!(g.cell_of(Vec2::new(0.74, 1.2)), Some((1, 2)));
        assert_eq!(g.cell_of(Vec2::new(-0.1, 1.0)), None);
        assert_eq!(g.cell_of(Vec2::new(3.0, 1.0)), None);
        assert_eq!(g.cell_center(1, 2), Vec2::new(0.75, 1.25));
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (13, 9);
        let src = |i: usize| i % 7 == 3 || i == 50;
        let got = squared_distance_transform(w, h, src);
        for i in 0..w * h {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let want = (0..w * h)
                .filter(|&j| src(j))
                .map(|j| {
                    let (sx, sy) = ((j % w) as f64, (j / w) as f64);
                    (x - sx).powi(2) + (y - sy).powi(2)
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(got[i], want, "cell {i}");
        }
    }

    #[test]
    fn components_split_by_wall() {
        let mut g = OccupancyGrid::empty_room(1.0, 7, 5).unwrap();
        for iy in 0..5 {
            g.set(3, iy, Cell::Wall);
        }
        assert_eq!(g.count_components(|i| g.cells()[i].is_free()), 2);
    }
}
