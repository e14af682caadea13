use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TaskConfig, TaskKind};
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec2};
use crate::scene::{path_from_field, sample_navigable_point, DistanceField, PathPolyline, Scene};

/// Goal draws per episode before giving up.
const GOAL_TRIES: usize = 20;
/// Start draws per goal.
const START_TRIES: usize = 50;

/// One navigation trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scene_id: String,
    pub start: Pose,
    pub goal: Vec2,
    pub task: TaskKind,
    /// Pedestrian tracks spawned at reset.
    pub ped_count: usize,
    /// Movable object centers (interactive task only).
    pub objects: Vec<Vec2>,
    /// Length of the reference shortest path, ignoring objects.
    pub shortest_path_length: f64,
    /// Seeds pedestrians, odometry drift and sensor noise.
    pub seed: u64,
}

/// Compact line-delimited form of an [`EpisodeSpec`]; everything else is
/// recomputed from the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scene_id: String,
    pub seed: u64,
    pub task: TaskKind,
    /// `[x, y, heading]`
    pub start: [f64; 3],
    pub goal: [f64; 2],
    pub ped_count: usize,
}

impl From<&EpisodeSpec> for EpisodeRecord {
    fn from(s: &EpisodeSpec) -> Self {
        EpisodeRecord {
            scene_id: s.scene_id.clone(),
            seed: s.seed,
            task: s.task,
            start: [s.start.position.x, s.start.position.y, s.start.heading],
            goal: [s.goal.x, s.goal.y],
            ped_count: s.ped_count,
        }
    }
}

/// Arc-length marks at every `spacing` along a path of `length`, skipping
/// marks closer than `margin` to either end.
pub fn object_marks(length: f64, spacing: f64, margin: f64) -> Vec<f64> {
    let mut marks = Vec::new();
    let mut k = 1u32;
    loop {
        let s = spacing * k as f64;
        if s >= length {
            break;
        }
        if s >= margin && length - s >= margin {
            marks.push(s);
        }
        k += 1;
    }
    marks
}

fn reference_path(scene: &Scene, start: Vec2, field: &DistanceField, mask: &[bool]) -> Result<PathPolyline> {
    path_from_field(scene, field, mask, start)
}

fn assemble(
    scene: &Scene,
    start: Pose,
    goal: Vec2,
    path: &PathPolyline,
    task: TaskKind,
    ped_count: usize,
    seed: u64,
    cfg: &TaskConfig,
) -> EpisodeSpec {
    let objects = match task {
        TaskKind::InteractiveNav => object_marks(path.length(), cfg.object_spacing, cfg.object_margin)
            .into_iter()
            .map(|s| path.point_at(s))
            .collect(),
        _ => Vec::new(),
    };
    EpisodeSpec {
        scene_id: scene.id().to_string(),
        start,
        goal,
        task,
        ped_count,
        objects,
        shortest_path_length: path.length(),
        seed,
    }
}

/// Samples a start pose and goal whose reference path length lies in the
/// configured range, and attaches task content.
pub fn make_episode<R: Rng + ?Sized>(
    scene: &Scene,
    rng: &mut R,
    task: TaskKind,
    ped_count: usize,
    cfg: &TaskConfig,
) -> Result<EpisodeSpec> {
    let mask = scene.passable_mask(cfg.agent_clearance);
    for _ in 0..GOAL_TRIES {
        let goal = sample_navigable_point(scene, rng, cfg.agent_clearance)?;
        let field = DistanceField::compute(scene.grid(), goal, &mask)?;
        for _ in 0..START_TRIES {
            let start = sample_navigable_point(scene, rng, cfg.agent_clearance)?;
            let d = field.geodesic_distance(start)?;
            if !d.is_finite() || d < cfg.min_distance || d > cfg.max_distance {
                continue;
            }
            let path = reference_path(scene, start, &field, &mask)?;
            if path.length() < cfg.min_distance || path.length() > cfg.max_distance {
                continue;
            }
            let heading = rng.gen_range(-PI..PI);
            let seed = rng.gen::<u64>();
            return Ok(assemble(scene, Pose::new(start, heading), goal, &path, task, ped_count, seed, cfg));
        }
    }
    Err(Error::SamplingFailed(format!(
        "no start/goal pair in [{}, {}] m after {} goals in scene {}",
        cfg.min_distance,
        cfg.max_distance,
        GOAL_TRIES,
        scene.id()
    )))
}

impl EpisodeSpec {
    /// Rebuilds the full spec from a dataset record.
    pub fn from_record(scene: &Scene, rec: &EpisodeRecord, cfg: &TaskConfig) -> Result<Self> {
        if rec.scene_id != scene.id() {
            return Err(Error::InvalidParam(format!(
                "record for scene {} replayed on {}",
                rec.scene_id,
                scene.id()
            )));
        }
        let start = Pose::new(Vec2::new(rec.start[0], rec.start[1]), rec.start[2]);
        let goal = Vec2::new(rec.goal[0], rec.goal[1]);
        let mask = scene.passable_mask(cfg.agent_clearance);
        for p in [start.position, goal] {
            if !scene.is_navigable(p, cfg.agent_clearance) {
                return Err(Error::NotNavigable { x: p.x, y: p.y });
            }
        }
        let field = DistanceField::compute(scene.grid(), goal, &mask)?;
        let path = reference_path(scene, start.position, &field, &mask)?;
        Ok(assemble(scene, start, goal, &path, rec.task, rec.ped_count, rec.seed, cfg))
    }
}

pub fn write_episodes(path: impl AsRef<Path>, records: &[EpisodeRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::scene::{generate_scene, OccupancyGrid, SceneParams};

    #[test]
    fn mark_enumeration() {
        assert_eq!(object_marks(2.6, 0.5, 0.5), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(object_marks(3.0, 0.5, 0.5), vec![0.5, 1.0, 1.5, 2.0, 2.5]);
        assert!(object_marks(0.9, 0.5, 0.5).is_empty());
    }

    #[test]
    fn episodes_respect_range() {
        let scene = generate_scene(4, &SceneParams::default()).unwrap();
        let cfg = TaskConfig::default();
        let mut rng = stream(4, "episodes", 0);
        for _ in 0..20 {
            let e = make_episode(&scene, &mut rng, TaskKind::PointNav, 0, &cfg).unwrap();
            assert!((1.0..=30.0).contains(&e.shortest_path_length));
            assert!(scene.is_navigable(e.start.position, cfg.agent_clearance));
            assert!(e.objects.is_empty());
        }
    }

    #[test]
    fn interactive_objects_on_path() {
        let scene = generate_scene(5, &SceneParams::default()).unwrap();
        let cfg = TaskConfig::default();
        let mut rng = stream(5, "episodes", 0);
        let e = make_episode(&scene, &mut rng, TaskKind::InteractiveNav, 0, &cfg).unwrap();
        let expected = object_marks(e.shortest_path_length, 0.5, 0.5).len();
        assert_eq!(e.objects.len(), expected);
    }

    #[test]
    fn record_round_trip() {
        let scene = Scene::new("room", OccupancyGrid::empty_room(0.05, 120, 80).unwrap(), 0);
        let cfg = TaskConfig::default();
        let mut rng = stream(1, "episodes", 0);
        let specs: Vec<EpisodeSpec> = (0..5)
            .map(|_| make_episode(&scene, &mut rng, TaskKind::InteractiveNav, 3, &cfg).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("val1.jsonl");
        let recs: Vec<EpisodeRecord> = specs.iter().map(EpisodeRecord::from).collect();
        write_episodes(&path, &recs).unwrap();
        let back = read_episodes(&path).unwrap();
        assert_eq!(back, recs);
        for (r, s) in back.iter().zip(&specs) {
            assert_eq!(&EpisodeSpec::from_record(&scene, r, &cfg).unwrap(), s);
        }
    }
}
