//! Observation augmentations (crop, cutout and their compositions) and the
//! dynamic-pedestrian augmentation that adds patrolling pedestrians to
//! training episodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{path_from_field, sample_pedestrian_endpoints, Scene};
use crate::sim::{DepthImage, Pedestrian, MAX_LINEAR_SPEED};
use crate::tasks::Observation;

/// Smallest image side accepted by the crop ops.
pub const MIN_CROP_INPUT: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropParams {
    pub shrink_fraction: f64,
}

impl Default for CropParams {
    fn default() -> Self {
        CropParams { shrink_fraction: 0.08 }
    }
}

impl CropParams {
    /// Output `(height, width)` for an input of `height × width`.
    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let keep = 1.0 - self.shrink_fraction;
        // the epsilon keeps exact products such as 0.92 * 100 from flooring down
        let f = |n: usize| (keep * n as f64 + 1e-9).floor() as usize;
        (f(height), f(width))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutParams {
    /// Height-to-width ratio range.
    pub aspect_range: [f64; 2],
    /// Rectangle area as a fraction of the frame.
    pub scale_range: [f64; 2],
    pub fill_value: f32,
    /// Relative slack below the minimum scale tolerated after flooring the
    /// rectangle sides to whole pixels.
    pub floor_tolerance: f64,
    pub max_tries: usize,
}

impl Default for CutoutParams {
    fn default() -> Self {
        CutoutParams {
            aspect_range: [0.3, 3.33],
            scale_range: [0.02, 0.33],
            fill_value: 0.0,
            floor_tolerance: 0.1,
            max_tries: 100,
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Integer rectangle sides for a target area fraction and aspect (h / w).
pub fn cutout_dims(height: usize, width: usize, scale: f64, aspect: f64) -> (usize, usize) {
    let area = scale * (height * width) as f64;
    ((area * aspect).sqrt().floor() as usize, (area / aspect).sqrt().floor() as usize)
}

fn check_crop_input(img: &DepthImage) -> Result<()> {
    if img.width() < MIN_CROP_INPUT || img.height() < MIN_CROP_INPUT {
        return Err(Error::InvalidParam(format!(
            "crop needs at least {MIN_CROP_INPUT}x{MIN_CROP_INPUT}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Extracts a uniformly placed window `shrink_fraction` smaller per side.
pub fn random_crop<R: Rng + ?Sized>(img: &DepthImage, rng: &mut R, params: &CropParams) -> Result<DepthImage> {
    check_crop_input(img)?;
    let (h, w) = params.output_dims(img.height(), img.width());
    let y0 = rng.gen_range(0..=img.height() - h);
    let x0 = rng.gen_range(0..=img.width() - w);
    img.window(x0, y0, w, h)
}

/// Deterministic counterpart of [`random_crop`]; odd margins favor the top-left.
pub fn center_crop(img: &DepthImage, params: &CropParams) -> Result<DepthImage> {
    check_crop_input(img)?;
    let (h, w) = params.output_dims(img.height(), img.width());
    img.window((img.width() - w) / 2, (img.height() - h) / 2, w, h)
}

/// Samples a cutout rectangle, or `None` when no draw satisfied the bounds.
pub fn sample_cutout_rect<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    rng: &mut R,
    params: &CutoutParams,
) -> Option<Rect> {
    let frame = (height * width) as f64;
    let [a_lo, a_hi] = params.aspect_range;
    let [s_lo, s_hi] = params.scale_range;
    for _ in 0..params.max_tries {
        let scale = rng.gen_range(s_lo..=s_hi);
        let aspect = rng.gen_range(a_lo..=a_hi);
        let (h, w) = cutout_dims(height, width, scale, aspect);
        if h == 0 || w == 0 || h > height || w > width {
            continue;
        }
        let realized_aspect = h as f64 / w as f64;
        let realized_scale = (h * w) as f64 / frame;
        if realized_aspect < a_lo || realized_aspect > a_hi || realized_scale < s_lo * (1.0 - params.floor_tolerance) {
            continue;
        }
        let y = rng.gen_range(0..=height - h);
        let x = rng.gen_range(0..=width - w);
        return Some(Rect {
            x,
            y,
            width: w,
            height: h,
        });
    }
    None
}

/// Fills one random rectangle with `fill_value`. Leaves the image unchanged
/// (and logs) if no valid rectangle was found.
pub fn random_cutout<R: Rng + ?Sized>(img: &DepthImage, rng: &mut R, params: &CutoutParams) -> DepthImage {
    let mut out = img.clone();
    match sample_cutout_rect(img.height(), img.width(), rng, params) {
        Some(r) => {
            for y in r.y..r.y + r.height {
                for x in r.x..r.x + r.width {
                    out.set(x, y, params.fill_value);
                }
            }
        }
        None => log::debug!("cutout skipped after {} tries", params.max_tries),
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentOp {
    Crop,
    Cutout,
}

impl std::str::FromStr for AugmentOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crop" => Ok(AugmentOp::Crop),
            "cutout" => Ok(AugmentOp::Cutout),
            other => Err(Error::InvalidParam(format!("unknown augmentation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    Train,
    Eval,
}

/// Ordered image ops plus the number of pedestrians added to training episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPipeline {
    pub ops: Vec<AugmentOp>,
    pub train_ped_count: usize,
    pub crop: CropParams,
    pub cutout: CutoutParams,
}

impl AugmentPipeline {
    pub fn new(ops: Vec<AugmentOp>, train_ped_count: usize) -> Self {
        AugmentPipeline {
            ops,
            train_ped_count,
            ..Default::default()
        }
    }

    /// Parses a `+` or `,` separated list such as `dynamic+crop`. The token
    /// `dynamic` sets the pedestrian count to `dynamic_peds`; `none` is empty.
    pub fn parse(spec: &str, dynamic_peds: usize) -> Result<Self> {
        let mut p = AugmentPipeline::default();
        for tok in spec.split(['+', ',']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "none" => {}
                "dynamic" => p.train_ped_count = dynamic_peds,
                op => p.ops.push(op.parse()?),
            }
        }
        Ok(p)
    }

    /// Image dims the policy sees for a sensor of `height × width`.
    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        self.ops.iter().fold((height, width), |(h, w), op| match op {
            AugmentOp::Crop => self.crop.output_dims(h, w),
            AugmentOp::Cutout => (h, w),
        })
    }

    pub fn label(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if self.train_ped_count > 0 {
            parts.push("dynamic");
        }
        for op in &self.ops {
            parts.push(match op {
                AugmentOp::Crop => "crop",
                AugmentOp::Cutout => "cutout",
            });
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

/// Applies the image ops in order. Eval mode center-crops and skips cutout.
/// Goal vector and previous action pass through unchanged.
pub fn apply_pipeline<R: Rng + ?Sized>(
    obs: &Observation,
    pipeline: &AugmentPipeline,
    rng: &mut R,
    mode: AugmentMode,
) -> Result<Observation> {
    let mut depth = obs.depth.clone();
    for op in &pipeline.ops {
        depth = match (op, mode) {
            (AugmentOp::Crop, AugmentMode::Train) => random_crop(&depth, rng, &pipeline.crop)?,
            (AugmentOp::Crop, AugmentMode::Eval) => center_crop(&depth, &pipeline.crop)?,
            (AugmentOp::Cutout, AugmentMode::Train) => random_cutout(&depth, rng, &pipeline.cutout),
            (AugmentOp::Cutout, AugmentMode::Eval) => depth,
        };
    }
    Ok(Observation { depth, ..obs.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PedestrianParams {
    pub radius: f64,
    /// Clearance required along pedestrian tracks.
    pub clearance: f64,
    /// Minimum geodesic distance between track endpoints.
    pub min_separation: f64,
    pub max_speed: f64,
    /// Per-pedestrian speed is `max_speed·(1 − u)`, `u ~ U[0, max_speed_reduction]`.
    pub max_speed_reduction: f64,
}

impl Default for PedestrianParams {
    fn default() -> Self {
        PedestrianParams {
            radius: 0.3,
            clearance: 0.35,
            min_separation: 3.0,
            max_speed: MAX_LINEAR_SPEED,
            max_speed_reduction: 0.1,
        }
    }
}

/// Creates `n` independent patrol tracks between endpoint pairs at least
/// `min_separation` apart along the shortest path.
pub fn populate_pedestrians<R: Rng + ?Sized>(
    scene: &Scene,
    n: usize,
    rng: &mut R,
    params: &PedestrianParams,
) -> Result<Vec<Pedestrian>> {
    let mut peds = Vec::with_capacity(n);
    if n == 0 {
        return Ok(peds);
    }
    let mask = scene.passable_mask(params.clearance);
    for _ in 0..n {
        let (_, b, field) = sample_pedestrian_endpoints(scene, rng, params.clearance, params.min_separation)?;
        // field is rooted at the first endpoint, so this runs b -> a
        let path = path_from_field(scene, &field, &mask, b)?.reversed();
        let speed = params.max_speed * (1.0 - rng.gen_range(0.0..=params.max_speed_reduction));
        let arc = rng.gen_range(0.0..=path.length());
        let direction = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        peds.push(Pedestrian::new(path, arc, direction, speed, params.radius));
    }
    Ok(peds)
}
