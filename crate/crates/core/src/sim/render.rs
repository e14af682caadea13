use std::f64::consts::FRAC_PI_2;

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Geometric};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::objects::MovableObject;
use super::pedestrian::Pedestrian;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec2};
use crate::scene::Scene;

/// Normalized depth image, row-major with row 0 at the top.
/// 0 is at the sensor, 1 is at or beyond max range.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        Ok(DepthImage { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        DepthImage {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    /// Copies the `w × h` window whose top-left corner is `(x0, y0)`.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<DepthImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::DimMismatch(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(DepthImage {
            width: w,
            height: h,
            values,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorFlavor {
    /// Multiplicative noise and dropout holes, like a scanned mesh.
    ScanLike,
    /// Exact depth.
    SyntheticClean,
}

impl SensorFlavor {
    pub fn name(self) -> &'static str {
        match self {
            SensorFlavor::ScanLike => "scan",
            SensorFlavor::SyntheticClean => "clean",
        }
    }
}

impl std::str::FromStr for SensorFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scan" | "scan-like" => Ok(SensorFlavor::ScanLike),
            "clean" | "synthetic-clean" => Ok(SensorFlavor::SyntheticClean),
            other => Err(Error::InvalidParam(format!("unknown sensor flavor `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub width: usize,
    pub height: usize,
    /// Radians, in (0, π).
    pub horizontal_fov: f64,
    pub max_range: f64,
    pub flavor: SensorFlavor,
    pub noise_seed: u64,
    /// Multiplicative noise standard deviation (scan-like only).
    pub noise_std: f64,
    /// Fraction of pixels dropped to max range (scan-like only).
    pub dropout: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            width: 64,
            height: 64,
            horizontal_fov: FRAC_PI_2,
            max_range: 10.0,
            flavor: SensorFlavor::ScanLike,
            noise_seed: 0,
            noise_std: 0.02,
            dropout: 0.005,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam("sensor dims must be positive".into()));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < std::f64::consts::PI) {
            return Err(Error::InvalidParam(format!("fov {} outside (0, π)", self.horizontal_fov)));
        }
        if !(0.0..=1.0).contains(&self.dropout) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParam("dropout must be in [0, 1] and noise_std >= 0".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidParam(format!("max range {} must be > 0", self.max_range)));
        }
        Ok(())
    }
}

/// Distance along the ray to the first non-free cell (Amanatides–Woo
/// traversal), or `None` within `t_max`.
fn cast_wall(scene: &Scene, origin: Vec2, dir: Vec2, t_max: f64) -> Option<f64> {
    let grid = scene.grid();
    let res = grid.resolution();
    let mut ix = (origin.x / res).floor() as isize;
    let mut iy = (origin.y / res).floor() as isize;
    if !grid.get_signed(ix, iy).is_free() {
        return Some(0.0);
    }
    let step_x: isize = if dir.x > 0.0 { 1 } else { -1 };
    let step_y: isize = if dir.y > 0.0 { 1 } else { -1 };
    let next_boundary = |i: isize, step: isize| (if step > 0 { i + 1 } else { i }) as f64 * res;
    let mut t_x = if dir.x != 0.0 {
        (next_boundary(ix, step_x) - origin.x) / dir.x
    } else {
        f64::INFINITY
    };
    let mut t_y = if dir.y != 0.0 {
        (next_boundary(iy, step_y) - origin.y) / dir.y
    } else {
        f64::INFINITY
    };
    let dt_x = if dir.x != 0.0 { res / dir.x.abs() } else { f64::INFINITY };
    let dt_y = if dir.y != 0.0 { res / dir.y.abs() } else { f64::INFINITY };
    loop {
        let t = if t_x < t_y {
            ix += step_x;
            let t = t_x;
            t_x += dt_x;
            t
        } else {
            iy += step_y;
            let t = t_y;
            t_y += dt_y;
            t
        };
        if t > t_max {
            return None;
        }
        if !grid.get_signed(ix, iy).is_free() {
            return Some(t);
        }
    }
}

fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.dot(oc) - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

fn ray_box(origin: Vec2, dir: Vec2, center: Vec2, half: f64) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for (o, d, c) in [(origin.x, dir.x, center.x), (origin.y, dir.y, center.y)] {
        let (lo, hi) = (c - half, c + half);
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Zero-mean, unit-variance approximately normal draw from one 64-bit word:
/// the centered sum of four 16-bit uniforms (Irwin–Hall), scaled by √3.
fn unit_noise(bits: u64) -> f32 {
    const INV: f32 = 1.0 / 65536.0;
    let sum = (bits & 0xffff) as f32 + ((bits >> 16) & 0xffff) as f32 + ((bits >> 32) & 0xffff) as f32 + (bits >> 48) as f32;
    // each term is uniform on [0, 1) with mean ~1/2 and variance 1/12
    (sum * INV + 2.0 * INV - 2.0) * 3f32.sqrt()
}

/// Multiplicative noise on every return, then dropout holes. Holes are
/// placed by geometric skips, which is equivalent to an independent
/// Bernoulli draw per pixel.
fn apply_scan_noise(values: &mut [f32], cfg: &SensorConfig) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.noise_seed);
    if cfg.noise_std > 0.0 {
        let std = cfg.noise_std as f32;
        for v in values.iter_mut() {
            if *v < 1.0 {
                *v = (*v * (1.0 + std * unit_noise(rng.next_u64()))).clamp(0.0, 1.0);
            }
        }
    }
    if cfg.dropout >= 1.0 {
        values.fill(1.0);
    } else if cfg.dropout > 0.0 {
        let skips = Geometric::new(cfg.dropout).expect("dropout in (0, 1)");
        let mut i = 0usize;
        loop {
            let skip = skips.sample(&mut rng);
            i = match usize::try_from(skip).ok().and_then(|s| i.checked_add(s)) {
                Some(j) if j < values.len() => j,
                _ => break,
            };
            values[i] = 1.0;
            i += 1;
        }
    }
}

/// Renders a depth image with a column raycaster.
///
/// One ray per image column. Walls and furniture are full height;
/// pedestrians are upright cylinders and movable objects short boxes. Each
/// hit fills the rows whose view rays meet the body's vertical extent at
/// that distance under a pinhole model. Values are z-depth divided by max
/// range. The floor and ceiling return nothing (value 1).
pub fn render_depth(
    scene: &Scene,
    objects: &[MovableObject],
    peds: &[Pedestrian],
    pose: &Pose,
    cfg: &SensorConfig,
    sim: &SimConfig,
) -> DepthImage {
    let (w, h) = (cfg.width, cfg.height);
    let focal = (w as f64 / 2.0) / (cfg.horizontal_fov / 2.0).tan();
    let slopes: Vec<f64> = (0..h).map(|y| (h as f64 / 2.0 - (y as f64 + 0.5)) / focal).collect();
    let cam_h = sim.camera_height;
    let inv_range = 1.0 / cfg.max_range;
    let mut img = DepthImage::filled(w, h, 1.0);

    let fill = |img: &mut DepthImage, x: usize, z: f64, top: f64| {
        let value = (z * inv_range).min(1.0) as f32;
        if value >= 1.0 {
            return;
        }
        for (y, &s) in slopes.iter().enumerate() {
            // world height seen by row y at depth z
            let seen = cam_h + s * z;
            if seen >= 0.0 && seen <= top {
                let px = &mut img.values[y * w + x];
                if value < *px {
                    *px = value;
                }
            }
        }
    };

    for x in 0..w {
        let offset = ((w as f64 / 2.0 - (x as f64 + 0.5)) / focal).atan();
        let cos_off = offset.cos();
        let dir = Vec2::from_angle(pose.heading + offset);
        let t_max = cfg.max_range / cos_off;
        let t_wall = cast_wall(scene, pose.position, dir, t_max).unwrap_or(f64::INFINITY);
        if t_wall.is_finite() {
            fill(&mut img, x, t_wall * cos_off, f64::INFINITY);
        }
        for p in peds {
            if let Some(t) = ray_circle(pose.position, dir, p.position(), p.radius()) {
                if t < t_wall {
                    if t == 0.0 {
                        for y in 0..h {
                            img.values[y * w + x] = 0.0;
                        }
                    } else {
                        fill(&mut img, x, t * cos_off, sim.pedestrian_height);
                    }
                }
            }
        }
        for o in objects {
            if let Some(t) = ray_box(pose.position, dir, o.position, o.half_extent) {
                if t < t_wall {
                    fill(&mut img, x, t * cos_off, sim.object_height);
                }
            }
        }
    }

    if cfg.flavor == SensorFlavor::ScanLike {
        apply_scan_noise(&mut img.values, cfg);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{OccupancyGrid, PathPolyline};

    fn clean() -> SensorConfig {
        SensorConfig {
            flavor: SensorFlavor::SyntheticClean,
            ..Default::default()
        }
    }

    #[test]
    fn open_area_reads_max() {
        // a room far larger than the max range
        let s = Scene::new("big", OccupancyGrid::empty_room(0.1, 500, 500).unwrap(), 0);
        let pose = Pose::new(Vec2::new(25.0, 25.0), 0.3);
        let img = render_depth(&s, &[], &[], &pose, &clean(), &SimConfig::default());
        assert!(img.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wall_one_meter_ahead() {
        // east wall cell starts at x = 4.95
        let s = Scene::new("r", OccupancyGrid::empty_room(0.05, 100, 100).unwrap(), 0);
        let pose = Pose::new(Vec2::new(3.95, 2.5), 0.0);
        let img = render_depth(&s, &[], &[], &pose, &clean(), &SimConfig::default());
        let cx = 32;
        let mut wall_pixels = 0;
        for y in 0..64 {
            let v = img.get(cx, y);
            if v < 1.0 {
                assert!((v - 0.1).abs() < 1e-6, "row {y}: {v}");
                wall_pixels += 1;
            }
        }
        assert!(wall_pixels > 32);
    }

    #[test]
    fn pedestrian_reduces_center_depth() {
        let s = Scene::new("r", OccupancyGrid::empty_room(0.05, 200, 100).unwrap(), 0);
        let pose = Pose::new(Vec2::new(2.0, 2.5), 0.0);
        let path = PathPolyline::new(vec![Vec2::new(4.0, 2.5), Vec2::new(4.0, 4.0)]).unwrap();
        let ped = Pedestrian::new(path, 0.0, 1.0, 0.5, 0.3);
        let sim = SimConfig::default();
        let without = render_depth(&s, &[], &[], &pose, &clean(), &sim);
        let with = render_depth(&s, &[], &[ped], &pose, &clean(), &sim);
        for y in 0..64 {
            for x in 0..64 {
                assert!(with.get(x, y) <= without.get(x, y));
            }
        }
        for x in 30..34 {
            assert!(with.get(x, 32) < without.get(x, 32));
        }
    }

    #[test]
    fn scan_flavor_is_seeded() {
        let s = Scene::new("r", OccupancyGrid::empty_room(0.05, 100, 100).unwrap(), 0);
        let pose = Pose::new(Vec2::new(2.0, 2.5), 0.7);
        let sim = SimConfig::default();
        let cfg = SensorConfig::default();
        let a = render_depth(&s, &[], &[], &pose, &cfg, &sim);
        let b = render_depth(&s, &[], &[], &pose, &cfg, &sim);
        assert_eq!(a, b);
        let c = render_depth(&s, &[], &[], &pose, &SensorConfig { noise_seed: 1, ..cfg }, &sim);
        assert_ne!(a, c);
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_moments() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| unit_noise(rng.next_u64()) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn dropout_rate() {
        let cfg = SensorConfig {
            noise_std: 0.0,
            dropout: 0.005,
            ..Default::default()
        };
        let mut holes = 0usize;
        let frames = 400;
        for seed in 0..frames {
            let mut v = vec![0.5f32; 4096];
            apply_scan_noise(&mut v, &SensorConfig { noise_seed: seed, ..cfg.clone() });
            holes += v.iter().filter(|&&x| x == 1.0).count();
        }
        let rate = holes as f64 / (frames as f64 * 4096.0);
        // binomial standard error is about 1.8e-4
        assert!((rate - 0.005).abs() < 1e-3, "{rate}");
    }
}
