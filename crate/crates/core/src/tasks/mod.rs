//! Episode construction and the environment step contract for the
//! point-goal, social and interactive navigation tasks.

mod env;
mod episode;

pub use env::{EpisodeStats, NavEnv, Observation, StepOutcome};
pub use episode::{
    make_episode, object_marks, read_episodes, write_episodes, EpisodeRecord, EpisodeSpec,
};

use serde::{Deserialize, Serialize};

use crate::augment::PedestrianParams;
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Pose, Vec2};
use crate::sim::{SensorConfig, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    PointNav,
    SocialNav,
    InteractiveNav,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::PointNav, TaskKind::SocialNav, TaskKind::InteractiveNav];

    /// Pedestrians present in evaluation episodes of this task.
    pub fn eval_ped_count(self) -> usize {
        match self {
            TaskKind::SocialNav => 3,
            TaskKind::PointNav | TaskKind::InteractiveNav => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PointNav => "pointnav",
            TaskKind::SocialNav => "socialnav",
            TaskKind::InteractiveNav => "interactivenav",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown task `{s}`")))
    }
}

/// Reward weights: time penalty, backward/collision penalty, success bonus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w1: 0.002,
            w2: 0.02,
            w3: 10.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParam("reward weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-step event flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub backward: bool,
    pub collided: bool,
    pub success: bool,
    pub ped_collision: bool,
    pub timeout: bool,
    /// The action was a stop.
    pub stopped: bool,
}

impl StepFlags {
    pub fn is_terminal(&self) -> bool {
        self.stopped || self.ped_collision || self.timeout
    }
}

/// `−(d_new − d_prev) − w1 − w2·(I_back + I_col) + w3·I_suc`
pub fn compute_reward(d_prev: f64, d_new: f64, flags: &StepFlags, cfg: &RewardConfig) -> f64 {
    let penalties = flags.backward as u8 as f64 + flags.collided as u8 as f64;
    -(d_new - d_prev) - cfg.w1 - cfg.w2 * penalties + cfg.w3 * (flags.success as u8 as f64)
}

/// Distance and bearing (in `(−π, π]`) of `goal` seen from `pose`.
pub fn goal_vector(pose: &Pose, goal: Vec2) -> (f64, f64) {
    let d = goal - pose.position;
    let dist = d.norm();
    if dist == 0.0 {
        return (0.0, 0.0);
    }
    (dist, normalize_angle(d.angle() - pose.heading))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Accepted start-goal shortest path lengths.
    pub min_distance: f64,
    pub max_distance: f64,
    /// Clearance required at start, goal and along the reference path.
    pub agent_clearance: f64,
    /// Arc-length spacing of movable objects (interactive task).
    pub object_spacing: f64,
    /// Object marks closer than this to either end are skipped.
    pub object_margin: f64,
    pub success_distance: f64,
    pub max_steps: u32,
    pub ped_collision_distance: f64,
    /// Pedestrians spawning closer than this to the start are moved.
    pub ped_spawn_clearance: f64,
    /// Per-step Gaussian drift of the dead-reckoned pose (meters, radians).
    pub odometry_translation_std: f64,
    pub odometry_rotation_std: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            min_distance: 1.0,
            max_distance: 30.0,
            agent_clearance: 0.23,
            object_spacing: 0.5,
            object_margin: 0.5,
            success_distance: 0.2,
            max_steps: 500,
            ped_collision_distance: 0.3,
            ped_spawn_clearance: 1.0,
            odometry_translation_std: 0.0,
            odometry_rotation_std: 0.0,
        }
    }
}

/// Everything an environment instance needs besides the scene.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub task: TaskConfig,
    pub sim: SimConfig,
    pub sensor: SensorConfig,
    pub pedestrians: PedestrianParams,
    pub reward: RewardConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.reward.validate()?;
        let t = &self.task;
        if !(t.min_distance > 0.0 && t.min_distance <= t.max_distance) {
            return Err(Error::InvalidParam(format!(
                "episode distance range [{}, {}] is empty",
                t.min_distance, t.max_distance
            )));
        }
        if t.max_steps == 0 || !(t.object_spacing > 0.0) {
            return Err(Error::InvalidParam("max_steps and object_spacing must be positive".into()));
        }
        if !(self.sim.dt > 0.0) || !(self.sim.agent_radius > 0.0) {
            return Err(Error::InvalidParam("dt and agent radius must be positive".into()));
        }
        Ok(())
    }
}
