use rand::Rng;

use super::distance::DistanceField;
use super::Scene;
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Cap on rejection-sampling draws before giving up.
pub const MAX_SAMPLING_TRIES: usize = 1000;

fn qualifying_cells(scene: &Scene, clearance: f64) -> Vec<usize> {
    let grid = scene.grid();
    let cl = scene.clearance_field();
    grid.cells()
        .iter()
        .enumerate()
        .filter(|&(i, c)| c.is_free() && cl[i] >= clearance)
        .map(|(i, _)| i)
        .collect()
}

fn point_in_cell<R: Rng + ?Sized>(scene: &Scene, idx: usize, rng: &mut R) -> Vec2 {
    let grid = scene.grid();
    let (ix, iy) = grid.coords(idx);
    let res = grid.resolution();
    // half-open offsets keep the point inside its cell
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    Vec2::new((ix as f64 + u) * res, (iy as f64 + v) * res)
}

/// Uniform over free cells with clearance ≥ `clearance`, then uniform
/// within the chosen cell.
pub fn sample_navigable_point<R: Rng + ?Sized>(scene: &Scene, rng: &mut R, clearance: f64) -> Result<Vec2> {
    if !(clearance >= 0.0) {
        return Err(Error::InvalidParam(format!("clearance {clearance} must be >= 0")));
    }
    let cells = qualifying_cells(scene, clearance);
    if cells.is_empty() {
        return Err(Error::SamplingFailed(format!(
            "no cell with clearance >= {clearance} m in scene {}",
            scene.id()
        )));
    }
    let idx = cells[rng.gen_range(0..cells.len())];
    Ok(point_in_cell(scene, idx, rng))
}

/// Two navigable points whose geodesic separation (over cells with the
/// given clearance) is at least `min_separation` meters.
///
/// The first endpoint is drawn, its distance field computed, and second
/// endpoints are rejection-sampled against it; after a few misses a new
/// first endpoint is drawn. Gives up after [`MAX_SAMPLING_TRIES`] draws.
pub fn sample_pedestrian_endpoints<R: Rng + ?Sized>(
    scene: &Scene,
    rng: &mut R,
    clearance: f64,
    min_separation: f64,
) -> Result<(Vec2, Vec2, DistanceField)> {
    let cells = qualifying_cells(scene, clearance);
    if cells.is_empty() {
        return Err(Error::SamplingFailed(format!(
            "no cell with clearance >= {clearance} m in scene {}",
            scene.id()
        )));
    }
    let mask = scene.passable_mask(clearance);
    let mut draws = 0;
    while draws < MAX_SAMPLING_TRIES {
        let a = point_in_cell(scene, cells[rng.gen_range(0..cells.len())], rng);
        let field = DistanceField::compute(scene.grid(), a, &mask)?;
        for _ in 0..10 {
            draws += 1;
            let b = point_in_cell(scene, cells[rng.gen_range(0..cells.len())], rng);
            let d = field.geodesic_distance(b)?;
            if d.is_finite() && d >= min_separation {
                return Ok((a, b, field));
            }
            if draws >= MAX_SAMPLING_TRIES {
                break;
            }
        }
    }
    Err(Error::SamplingFailed(format!(
        "no endpoint pair {min_separation} m apart after {MAX_SAMPLING_TRIES} draws in scene {}",
        scene.id()
    )))
}
