//! Apartment layouts, navigability queries, geodesic distance fields and
//! shortest paths.

mod distance;
mod generate;
mod grid;
mod io;
mod path;
mod sampling;

use std::f64::consts::FRAC_1_SQRT_2;

pub use distance::{compute_distance_field, DistanceField, GridCost, UNREACHABLE};
pub use generate::{generate_scene, SceneParams};
pub use grid::{Cell, OccupancyGrid};
pub use io::{load_scene, parse_scene, save_scene, scene_to_string, SCENE_FORMAT_VERSION};
pub use path::{shortest_path, PathPolyline};
pub(crate) use path::path_from_field;
pub use sampling::{sample_navigable_point, sample_pedestrian_endpoints, MAX_SAMPLING_TRIES};

pub(crate) use grid::squared_distance_transform;

use crate::geom::Vec2;

/// An occupancy grid plus its clearance field.
///
/// Clearance is a conservative distance (meters) from a cell center to the
/// nearest non-free cell: the exact center-to-center Euclidean distance
/// minus half a cell diagonal. It is zero exactly on non-free cells and
/// 1-Lipschitz in the grid metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    id: String,
    grid: OccupancyGrid,
    clearance: Vec<f64>,
    seed: u64,
}

impl Scene {
    pub fn new(id: impl Into<String>, grid: OccupancyGrid, seed: u64) -> Self {
        let clearance = clearance_field(&grid);
        Scene {
            id: id.into(),
            grid,
            clearance,
            seed,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    pub fn clearance_field(&self) -> &[f64] {
        &self.clearance
    }

    pub fn clearance(&self, ix: usize, iy: usize) -> f64 {
        self.clearance[self.grid.index(ix, iy)]
    }

    /// Clearance of the cell containing `p`; zero outside the grid.
    pub fn clearance_at(&self, p: Vec2) -> f64 {
        self.grid.cell_of(p).map_or(0.0, |(ix, iy)| self.clearance(ix, iy))
    }

    /// True when `p` lies in a free cell whose clearance is at least `clearance`.
    pub fn is_navigable(&self, p: Vec2, clearance: f64) -> bool {
        match self.grid.cell_of(p) {
            Some((ix, iy)) => self.grid.is_free(ix, iy) && self.clearance(ix, iy) >= clearance,
            None => false,
        }
    }

    /// Per-cell passability for a body needing `clearance` meters.
    pub fn passable_mask(&self, clearance: f64) -> Vec<bool> {
        self.grid
            .cells()
            .iter()
            .zip(&self.clearance)
            .map(|(c, &cl)| c.is_free() && cl >= clearance)
            .collect()
    }

    /// Whether all free cells form one 8-connected component.
    pub fn free_space_connected(&self) -> bool {
        let cells = self.grid.cells();
        self.grid.count_components(|i| cells[i].is_free()) == 1
    }

    /// Whether all cells with at least `clearance` form one component.
    pub fn navigable_space_connected(&self, clearance: f64) -> bool {
        let mask = self.passable_mask(clearance);
        self.grid.count_components(|i| mask[i]) <= 1
    }
}

fn clearance_field(grid: &OccupancyGrid) -> Vec<f64> {
    let cells = grid.cells();
    let d2 = squared_distance_transform(grid.width(), grid.height(), |i| !cells[i].is_free());
    let res = grid.resolution();
    cells
        .iter()
        .zip(d2)
        .map(|(c, d2)| {
            if c.is_free() {
                (d2.sqrt() * res - res * FRAC_1_SQRT_2).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clearance_is_zero_on_walls_and_lipschitz() {
        let mut grid = OccupancyGrid::empty_room(0.1, 30, 20).unwrap();
        for iy in 5..12 {
            grid.set(14, iy, Cell::Furniture);
        }
        let scene = Scene::new("t", grid, 0);
        let g = scene.grid();
        for iy in 0..g.height() {
            for ix in 0..g.width() {
                let c = scene.clearance(ix, iy);
                if !g.is_free(ix, iy) {
                    assert_eq!(c, 0.0);
                } else {
                    assert!(c > 0.0);
                }
                if ix + 1 < g.width() {
                    assert!((c - scene.clearance(ix + 1, iy)).abs() <= g.resolution() + 1e-12);
                }
                if iy + 1 < g.height() {
                    assert!((c - scene.clearance(ix, iy + 1)).abs() <= g.resolution() + 1e-12);
                }
            }
        }
    }
}
