//! Versioned text format for scenes.
//!
//! ```text
//! dynanav-scene 1
//! id scene-000007
//! resolution 0.05
//! width 240
//! height 200
//! seed 7
//! ########...
//! ```
//!
//! Grid rows follow the header, top row first (highest `iy`), one character
//! per cell: `#` wall, `.` free, `F` furniture.

use std::fmt::Write as _;
use std::path::Path;

use super::{Cell, OccupancyGrid, Scene};
use crate::error::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dynanav-scene";

pub fn scene_to_string(scene: &Scene) -> String {
    let g = scene.grid();
    let mut out = String::with_capacity((g.width() + 1) * g.height() + 128);
    let _ = writeln!(out, "{MAGIC} {SCENE_FORMAT_VERSION}");
    let _ = writeln!(out, "id {}", scene.id());
    let _ = writeln!(out, "resolution {}", g.resolution());
    let _ = writeln!(out, "width {}", g.width());
    let _ = writeln!(out, "height {}", g.height());
    let _ = writeln!(out, "seed {}", scene.seed());
    for iy in (0..g.height()).rev() {
        for ix in 0..g.width() {
            out.push(match g.get(ix, iy) {
                Cell::Wall => '#',
                Cell::Free => '.',
                Cell::Furniture => 'F',
            });
        }
        out.push('\n');
    }
    out
}

fn header<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let line = lines
        .next()
        .ok_or_else(|| Error::format("scene", format!("missing `{key}` header")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::format("scene", format!("expected `{key} <value>`, got `{line}`")))
}

fn num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("scene", format!("bad {key} value `{s}`")))
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut lines = text.lines();
    let version: u32 = num(header(&mut lines, MAGIC)?, "version")?;
    if version != SCENE_FORMAT_VERSION {
        return Err(Error::format("scene", format!("unsupported version {version}")));
    }
    let id = header(&mut lines, "id")?.to_string();
    let resolution: f64 = num(header(&mut lines, "resolution")?, "resolution")?;
    let width: usize = num(header(&mut lines, "width")?, "width")?;
    let height: usize = num(header(&mut lines, "height")?, "height")?;
    let seed: u64 = num(header(&mut lines, "seed")?, "seed")?;

    let mut cells = vec![Cell::Wall; width * height];
    for row in 0..height {
        let line = lines
            .next()
            .ok_or_else(|| Error::format("scene", format!("expected {height} rows, got {row}")))?;
        if line.chars().count() != width {
            return Err(Error::format("scene", format!("row {row} has length {} not {width}", line.len())));
        }
        let iy = height - 1 - row;
        for (ix, ch) in line.chars().enumerate() {
            cells[iy * width + ix] = match ch {
                '#' => Cell::Wall,
                '.' => Cell::Free,
                'F' => Cell::Furniture,
                other => return Err(Error::format("scene", format!("unknown cell character `{other}`"))),
            };
        }
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(Error::format("scene", "trailing content after grid"));
    }
    let grid = OccupancyGrid::new(resolution, width, height, cells)?;
    Ok(Scene::new(id, grid, seed))
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_string(scene))?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    parse_scene(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneParams};

    #[test]
    fn round_trip_is_bit_exact() {
        let scene = generate_scene(3, &SceneParams::default()).unwrap();
        let text = scene_to_string(&scene);
        let back = parse_scene(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(scene_to_string(&back), text);
    }

    #[test]
    fn odd_resolution_survives() {
        let g = OccupancyGrid::empty_room(0.1 + 0.2, 5, 4).unwrap();
        let s = Scene::new("x", g, u64::MAX);
        let back = parse_scene(&scene_to_string(&s)).unwrap();
        assert_eq!(back.resolution().to_bits(), s.resolution().to_bits());
        assert_eq!(back.seed(), u64::MAX);
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_scene("").is_err());
        assert!(parse_scene("dynanav-scene 2\n").is_err());
        let good = scene_to_string(&Scene::new("x", OccupancyGrid::empty_room(0.5, 4, 3).unwrap(), 0));
        assert!(parse_scene(&good.replace("#..#", "#.x#")).is_err());
        assert!(parse_scene(&good.replace("#..#", "#...")).is_err());
        assert!(parse_scene(&format!("{good}####\n")).is_err());
    }
}
