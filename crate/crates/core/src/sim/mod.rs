//! Kinematic simulation: agent motion, pedestrian patrols, pushable objects,
//! collision handling and raycast depth rendering.

mod agent;
mod export;
mod objects;
mod pedestrian;
mod render;

pub use agent::{
    check_pedestrian_collision, circle_hits_grid, detect_stop, step_agent, Action, AgentState,
    MAX_ANGULAR_SPEED, MAX_LINEAR_SPEED, STOP_FRACTION,
};
pub use export::{read_pgm16, write_pgm16, TrajectoryLog, TrajectoryRow};
pub use objects::{push_object, Contact, MovableObject};
pub use pedestrian::{step_pedestrians, Pedestrian};
pub use render::{render_depth, DepthImage, SensorConfig, SensorFlavor};

use serde::{Deserialize, Serialize};

/// Physical constants of the simulated bodies and control loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Control period in seconds (10 Hz).
    pub dt: f64,
    pub agent_radius: f64,
    pub pedestrian_radius: f64,
    pub pedestrian_height: f64,
    pub object_height: f64,
    pub object_half_extent: f64,
    pub object_mass: f64,
    pub camera_height: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            agent_radius: 0.18,
            pedestrian_radius: 0.3,
            pedestrian_height: 1.7,
            object_height: 0.5,
            object_half_extent: 0.1,
            object_mass: 1.0,
            camera_height: 0.6,
        }
    }
}
