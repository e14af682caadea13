use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::{OccupancyGrid, Scene};
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Marker value for cells that cannot reach the goal.
pub const UNREACHABLE: f64 = f64::INFINITY;

/// Exact cost of an 8-connected grid path: `straight + diagonal·√2` steps.
///
/// Since √2 is irrational, two costs are equal only when both counts match,
/// so ordering on this type is exact and every shortest distance has a
/// unique representation independent of the search order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct GridCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl GridCost {
    pub fn step(self, diagonal: bool) -> GridCost {
        if diagonal {
            GridCost {
                straight: self.straight,
                diagonal: self.diagonal + 1,
            }
        } else {
            GridCost {
                straight: self.straight + 1,
                diagonal: self.diagonal,
            }
        }
    }

    /// Length in meters for a grid of the given resolution.
    pub fn meters(self, resolution: f64) -> f64 {
        resolution * (self.straight as f64 + self.diagonal as f64 * SQRT_2)
    }
}

impl Ord for GridCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of (ds + dd·√2)
        let ds = self.straight as i64 - other.straight as i64;
        let dd = self.diagonal as i64 - other.diagonal as i64;
        match (ds.signum(), dd.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b >= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b <= 0 => Ordering::Less,
            (1, _) => (ds * ds).cmp(&(2 * dd * dd)),
            _ => (2 * dd * dd).cmp(&(ds * ds)),
        }
    }
}

impl PartialOrd for GridCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distance (meters) from every cell to a goal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    goal: Vec2,
    goal_cell: (usize, usize),
    width: usize,
    height: usize,
    resolution: f64,
    values: Vec<f64>,
}

impl DistanceField {
    /// Dijkstra over the 8-connected grid restricted to `passable` cells,
    /// with unit orthogonal and √2 diagonal step costs (times resolution).
    /// Diagonal steps may not cut corners.
    pub fn compute(grid: &OccupancyGrid, goal: Vec2, passable: &[bool]) -> Result<Self> {
        let (gx, gy) = grid.cell_of(goal).ok_or(Error::OutOfBounds { x: goal.x, y: goal.y })?;
        let goal_idx = grid.index(gx, gy);
        if !passable[goal_idx] {
            return Err(Error::NotNavigable { x: goal.x, y: goal.y });
        }
        let costs = dijkstra(grid, goal_idx, passable);
        let res = grid.resolution();
        let values = costs
            .iter()
            .map(|c| c.map_or(UNREACHABLE, |c| c.meters(res)))
            .collect();
        Ok(DistanceField {
            goal,
            goal_cell: (gx, gy),
            width: grid.width(),
            height: grid.height(),
            resolution: res,
            values,
        })
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal_cell
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.width + ix]
    }

    pub fn is_reachable(&self, ix: usize, iy: usize) -> bool {
        self.value(ix, iy).is_finite()
    }

    /// Bilinear interpolation over the four cell centers around `p`.
    ///
    /// Unreachable cells are dropped from the stencil and the remaining
    /// weights renormalized; returns [`UNREACHABLE`] when no stencil cell
    /// is reachable.
    pub fn geodesic_distance(&self, p: Vec2) -> Result<f64> {
        let w = self.width as f64 * self.resolution;
        let h = self.height as f64 * self.resolution;
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w && p.y <= h) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        let u = p.x / self.resolution - 0.5;
        let v = p.y / self.resolution - 0.5;
        let i0 = u.floor();
        let j0 = v.floor();
        let fx = u - i0;
        let fy = v - j0;
        let (i0, j0) = (i0 as isize, j0 as isize);
        let stencil = [
            (i0, j0, (1.0 - fx) * (1.0 - fy)),
            (i0 + 1, j0, fx * (1.0 - fy)),
            (i0, j0 + 1, (1.0 - fx) * fy),
            (i0 + 1, j0 + 1, fx * fy),
        ];
        let mut acc = 0.0;
        let mut weight = 0.0;
        let mut plain_sum = 0.0;
        let mut plain_count = 0usize;
        for (i, j, wgt) in stencil {
            if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
                continue;
            }
            let val = self.value(i as usize, j as usize);
            if !val.is_finite() {
                continue;
            }
            acc += wgt * val;
            weight += wgt;
            plain_sum += val;
            plain_count += 1;
        }
        if plain_count == 0 {
            Ok(UNREACHABLE)
        } else if weight > 1e-12 {
            Ok(acc / weight)
        } else {
            Ok(plain_sum / plain_count as f64)
        }
    }
}

/// Distance field over all free cells of the scene.
pub fn compute_distance_field(scene: &Scene, goal: Vec2) -> Result<DistanceField> {
    let mask: Vec<bool> = scene.grid().cells().iter().map(|c| c.is_free()).collect();
    DistanceField::compute(scene.grid(), goal, &mask)
}

pub(crate) fn dijkstra(grid: &OccupancyGrid, source: usize, passable: &[bool]) -> Vec<Option<GridCost>> {
    let mut best: Vec<Option<GridCost>> = vec![None; grid.len()];
    let mut done = vec![false; grid.len()];
    let mut heap = BinaryHeap::new();
    best[source] = Some(GridCost::default());
    heap.push(Reverse((GridCost::default(), source)));
    let pass = |i: usize| passable[i];
    while let Some(Reverse((cost, idx))) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        for (n, diagonal) in grid.neighbours(idx, &pass) {
            if done[n] {
                continue;
            }
            let candidate = cost.step(diagonal);
            if best[n].map_or(true, |b| candidate < b) {
                best[n] = Some(candidate);
                heap.push(Reverse((candidate, n)));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Cell;

    fn free_mask(g: &OccupancyGrid) -> Vec<bool> {
        g.cells().iter().map(|c| c.is_free()).collect()
    }

    #[test]
    fn cost_ordering_is_exact() {
        let a = GridCost { straight: 3, diagonal: 0 };
        let b = GridCost { straight: 0, diagonal: 2 }; // 2.828
        let c = GridCost { straight: 1, diagonal: 1 }; // 2.414
        assert!(b < a);
        assert!(c < b);
        assert!(GridCost { straight: 7, diagonal: 0 } < GridCost { straight: 0, diagonal: 5 });
        // 5√2 ≈ 7.071 sits between 7 and 8 straight steps
        assert!(GridCost { straight: 0, diagonal: 5 } < GridCost { straight: 8, diagonal: 0 });
    }

    #[test]
    fn straight_line_and_identity() {
        let g = OccupancyGrid::empty_room(0.1, 12, 12).unwrap();
        let goal = g.cell_center(5, 5);
        let f = DistanceField::compute(&g, goal, &free_mask(&g)).unwrap();
        assert_eq!(f.value(5, 5), 0.0);
        assert!((f.value(9, 5) - 0.4).abs() < 1e-12);
        assert_eq!(f.geodesic_distance(goal).unwrap(), 0.0);
        assert_eq!(f.value(0, 0), UNREACHABLE);
    }

    #[test]
    fn goal_in_wall_is_an_error() {
        let g = OccupancyGrid::empty_room(0.1, 12, 12).unwrap();
        let r = DistanceField::compute(&g, Vec2::new(0.05, 0.05), &free_mask(&g));
        assert!(matches!(r, Err(Error::NotNavigable { .. })));
        let r = DistanceField::compute(&g, Vec2::new(-1.0, 0.5), &free_mask(&g));
        assert!(matches!(r, Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn interpolation_midpoint() {
        let g = OccupancyGrid::empty_room(1.0, 8, 3).unwrap();
        // corridor along y = 1: values grow by 1 per cell from the goal at x=1
        let f = DistanceField::compute(&g, g.cell_center(1, 1), &free_mask(&g)).unwrap();
        assert_eq!(f.value(2, 1), 1.0);
        assert_eq!(f.value(3, 1), 2.0);
        // midway between cells valued 2 and 3 on the corridor row; the rows
        // above and below are walls and drop out of the stencil.
        let d = f.geodesic_distance(Vec2::new(4.0, 1.5)).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
        assert!(f.geodesic_distance(Vec2::new(9.0, 1.0)).is_err());
    }

    #[test]
    fn unreachable_pocket() {
        let mut g = OccupancyGrid::empty_room(1.0, 9, 5).unwrap();
        for iy in 0..5 {
            g.set(4, iy, Cell::Wall);
        }
        let f = DistanceField::compute(&g, g.cell_center(1, 1), &free_mask(&g)).unwrap();
        assert!(!f.is_reachable(6, 2));
        assert_eq!(f.geodesic_distance(Vec2::new(6.5, 2.5)).unwrap(), UNREACHABLE);
    }
}
