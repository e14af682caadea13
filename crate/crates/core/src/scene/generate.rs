use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, OccupancyGrid, Scene};
use crate::error::{Error, Result};
use crate::rng;

/// Procedural apartment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub width_m: f64,
    pub height_m: f64,
    pub resolution: f64,
    pub min_rooms: usize,
    pub max_rooms: usize,
    /// Fraction of each room's floor covered by furniture, in [0, 0.15].
    pub furniture_density: f64,
    pub min_room_size_m: f64,
    pub door_width_min_m: f64,
    pub door_width_max_m: f64,
    pub wall_thickness_cells: usize,
    /// Clearance the navigable region must keep connected.
    pub navigable_clearance_m: f64,
    pub max_attempts: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width_m: 12.0,
            height_m: 10.0,
            resolution: 0.05,
            min_rooms: 2,
            max_rooms: 6,
            furniture_density: 0.08,
            min_room_size_m: 2.4,
            door_width_min_m: 0.9,
            door_width_max_m: 1.2,
            wall_thickness_cells: 2,
            navigable_clearance_m: 0.23,
            max_attempts: 20,
        }
    }
}

impl SceneParams {
    /// One open room with no furniture.
    pub fn empty_room(width_m: f64, height_m: f64) -> Self {
        SceneParams {
            width_m,
            height_m,
            min_rooms: 1,
            max_rooms: 1,
            furniture_density: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.resolution > 0.0 && self.resolution <= 0.5) {
            return bad(format!("resolution {} outside (0, 0.5]", self.resolution));
        }
        if !(2.0..=60.0).contains(&self.width_m) || !(2.0..=60.0).contains(&self.height_m) {
            return bad(format!("extent {}x{} m outside [2, 60]", self.width_m, self.height_m));
        }
        if self.min_rooms < 1 || self.max_rooms > 6 || self.min_rooms > self.max_rooms {
            return bad(format!("room range {}..={} outside 1..=6", self.min_rooms, self.max_rooms));
        }
        if !(0.0..=0.15).contains(&self.furniture_density) {
            return bad(format!("furniture density {} outside [0, 0.15]", self.furniture_density));
        }
        if self.door_width_min_m < 0.8 || self.door_width_max_m < self.door_width_min_m {
            return bad(format!(
                "door widths [{}, {}] must satisfy 0.8 <= min <= max",
                self.door_width_min_m, self.door_width_max_m
            ));
        }
        if self.min_room_size_m < self.door_width_max_m + 0.4 {
            return bad(format!("min room size {} too small for doors", self.min_room_size_m));
        }
        if self.wall_thickness_cells == 0 || self.max_attempts == 0 {
            return bad("wall thickness and attempt count must be positive".into());
        }
        Ok(())
    }
}

/// Half-open cell rectangle.
#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0
    }
    fn h(&self) -> usize {
        self.y1 - self.y0
    }
    fn area(&self) -> usize {
        self.w() * self.h()
    }
}

/// A dividing wall: `vertical` walls occupy columns `pos..pos+t` over rows `lo..hi`.
#[derive(Clone, Copy, Debug)]
struct Split {
    vertical: bool,
    pos: usize,
    lo: usize,
    hi: usize,
}

/// Generates an apartment: binary space partition into rooms, one doorway
/// per dividing wall, then furniture blocks that keep the navigable space
/// connected. Deterministic in `(seed, params)`.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = rng::stream(seed, "scene", 0);
    let mut last_reason = String::new();
    for _ in 0..params.max_attempts {
        match try_generate(&mut rng, params) {
            Ok(grid) => {
                let scene = Scene::new(format!("scene-{seed:06}"), grid, seed);
                if !scene.free_space_connected() {
                    last_reason = "free space disconnected".into();
                    continue;
                }
                if !scene.navigable_space_connected(params.navigable_clearance_m) {
                    last_reason = "navigable space disconnected".into();
                    continue;
                }
                return Ok(scene);
            }
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailed {
        attempts: params.max_attempts,
        reason: last_reason,
    })
}

fn try_generate(rng: &mut rng::Rng, p: &SceneParams) -> std::result::Result<OccupancyGrid, String> {
    let res = p.resolution;
    let width = (p.width_m / res).round() as usize;
    let height = (p.height_m / res).round() as usize;
    let t = p.wall_thickness_cells;
    let min_room = (p.min_room_size_m / res).ceil() as usize;
    let target_rooms = rng.gen_range(p.min_rooms..=p.max_rooms);

    let mut rooms = vec![Rect {
        x0: 1,
        y0: 1,
        x1: width - 1,
        y1: height - 1,
    }];
    let mut splits = Vec::new();
    while rooms.len() < target_rooms {
        // split the largest room that can still be split
        let mut order: Vec<usize> = (0..rooms.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(rooms[i].area()));
        let Some(&i) = order
            .iter()
            .find(|&&i| rooms[i].w() >= 2 * min_room + t || rooms[i].h() >= 2 * min_room + t)
        else {
            return Err(format!("cannot fit {target_rooms} rooms of {} m", p.min_room_size_m));
        };
        let r = rooms[i];
        let can_v = r.w() >= 2 * min_room + t;
        let can_h = r.h() >= 2 * min_room + t;
        let vertical = match (can_v, can_h) {
            (true, true) if r.w() == r.h() => rng.gen_bool(0.5),
            (true, true) => r.w() > r.h(),
            (v, _) => v,
        };
        let (lo, hi) = if vertical { (r.x0, r.x1) } else { (r.y0, r.y1) };
        let pos = rng.gen_range(lo + min_room..=hi - min_room - t);
        let (a, b) = if vertical {
            (
                Rect { x1: pos, ..r },
                Rect { x0: pos + t, ..r },
            )
        } else {
            (
                Rect { y1: pos, ..r },
                Rect { y0: pos + t, ..r },
            )
        };
        let (slo, shi) = if vertical { (r.y0, r.y1) } else { (r.x0, r.x1) };
        splits.push(Split {
            vertical,
            pos,
            lo: slo,
            hi: shi,
        });
        rooms[i] = a;
        rooms.push(b);
    }

    let mut cells = vec![Cell::Wall; width * height];
    for r in &rooms {
        for iy in r.y0..r.y1 {
            for ix in r.x0..r.x1 {
                cells[iy * width + ix] = Cell::Free;
            }
        }
    }
    let at = |ix: usize, iy: usize| iy * width + ix;

    // doorways, recorded as keep-out zones for furniture
    let mut door_zones: Vec<Rect> = Vec::new();
    let keep_out = (0.8 / res).ceil() as usize;
    for s in &splits {
        let door = ((rng.gen_range(p.door_width_min_m..=p.door_width_max_m) / res).ceil() as usize).max(1);
        let side_free = |q: usize, cells: &[Cell]| {
            let (before, after) = (s.pos - 1, s.pos + t);
            if s.vertical {
                cells[at(before, q)].is_free() && cells[at(after, q)].is_free()
            } else {
                cells[at(q, before)].is_free() && cells[at(q, after)].is_free()
            }
        };
        if s.hi - s.lo < door {
            return Err("wall shorter than a doorway".into());
        }
        let candidates: Vec<usize> = (s.lo..=s.hi - door)
            .filter(|&start| (start..start + door).all(|q| side_free(q, &cells)))
            .collect();
        if candidates.is_empty() {
            return Err("no room for a doorway".into());
        }
        let start = candidates[rng.gen_range(0..candidates.len())];
        for q in start..start + door {
            for w in s.pos..s.pos + t {
                let idx = if s.vertical { at(w, q) } else { at(q, w) };
                cells[idx] = Cell::Free;
            }
        }
        door_zones.push(if s.vertical {
            Rect {
                x0: s.pos.saturating_sub(keep_out),
                x1: (s.pos + t + keep_out).min(width),
                y0: start,
                y1: start + door,
            }
        } else {
            Rect {
                x0: start,
                x1: start + door,
                y0: s.pos.saturating_sub(keep_out),
                y1: (s.pos + t + keep_out).min(height),
            }
        });
    }

    if p.furniture_density > 0.0 {
        place_furniture(rng, p, &rooms, &door_zones, &mut cells, width);
    }
    OccupancyGrid::new(res, width, height, cells).map_err(|e| e.to_string())
}

fn place_furniture(
    rng: &mut rng::Rng,
    p: &SceneParams,
    rooms: &[Rect],
    door_zones: &[Rect],
    cells: &mut [Cell],
    width: usize,
) {
    let res = p.resolution;
    let gap = (0.6 / res).ceil() as usize;
    let min_side = (0.4 / res).ceil() as usize;
    let max_side = (1.2 / res).ceil() as usize;
    for room in rooms {
        let target = (p.furniture_density * room.area() as f64) as usize;
        let mut covered = 0;
        for _ in 0..60 {
            if covered >= target {
                break;
            }
            let fw = rng.gen_range(min_side..=max_side).min(room.w().saturating_sub(2 * gap));
            let fh = rng.gen_range(min_side..=max_side).min(room.h().saturating_sub(2 * gap));
            if fw < min_side || fh < min_side {
                break;
            }
            let mut x0 = rng.gen_range(room.x0..=room.x1 - fw);
            let mut y0 = rng.gen_range(room.y0..=room.y1 - fh);
            // flush against a wall unless a full passage remains
            if x0 - room.x0 < gap {
                x0 = room.x0;
            } else if room.x1 - (x0 + fw) < gap {
                x0 = room.x1 - fw;
            }
            if y0 - room.y0 < gap {
                y0 = room.y0;
            } else if room.y1 - (y0 + fh) < gap {
                y0 = room.y1 - fh;
            }
            let piece = Rect {
                x0,
                y0,
                x1: x0 + fw,
                y1: y0 + fh,
            };
            let inflated = Rect {
                x0: piece.x0.saturating_sub(gap),
                y0: piece.y0.saturating_sub(gap),
                x1: piece.x1 + gap,
                y1: piece.y1 + gap,
            };
            let overlaps = |a: &Rect, b: &Rect| a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
            if door_zones.iter().any(|d| overlaps(d, &inflated)) {
                continue;
            }
            let clash = (inflated.y0..inflated.y1.min(cells.len() / width)).any(|iy| {
                (inflated.x0..inflated.x1.min(width)).any(|ix| cells[iy * width + ix] == Cell::Furniture)
            });
            if clash {
                continue;
            }
            for iy in piece.y0..piece.y1 {
                for ix in piece.x0..piece.x1 {
                    cells[iy * width + ix] = Cell::Furniture;
                }
            }
            covered += piece.area();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let p = SceneParams::default();
        let a = generate_scene(7, &p).unwrap();
        let b = generate_scene(7, &p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.grid(), generate_scene(8, &p).unwrap().grid());
    }

    #[test]
    fn single_room_is_all_free_inside() {
        let p = SceneParams {
            min_rooms: 1,
            max_rooms: 1,
            furniture_density: 0.0,
            ..Default::default()
        };
        let s = generate_scene(7, &p).unwrap();
        let g = s.grid();
        for iy in 1..g.height() - 1 {
            for ix in 1..g.width() - 1 {
                assert!(g.is_free(ix, iy));
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = SceneParams {
            furniture_density: 0.3,
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, &p), Err(Error::InvalidParam(_))));
        let p = SceneParams {
            width_m: 4.0,
            height_m: 4.0,
            min_rooms: 6,
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, &p), Err(Error::GenerationFailed { .. })));
    }

    #[test]
    fn default_scenes_have_rooms_and_doors() {
        for seed in 0..10 {
            let s = generate_scene(seed, &SceneParams::default()).unwrap();
            assert!(s.free_space_connected());
            // at least one interior wall cell means at least two rooms
            let g = s.grid();
            let interior_walls = (2..g.height() - 2)
                .flat_map(|iy| (2..g.width() - 2).map(move |ix| (ix, iy)))
                .filter(|&(ix, iy)| g.get(ix, iy) == Cell::Wall)
                .count();
            assert!(interior_walls > 0, "seed {seed}");
        }
    }
}
