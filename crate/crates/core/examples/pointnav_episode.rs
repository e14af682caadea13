//! Drives one point-goal episode with a greedy controller that follows the
//! shortest path, then logs the trajectory to CSV.
//!
//! `cargo run --release --example pointnav_episode -- [trajectory.csv]`

use std::sync::Arc;

use dynanav::rng::stream;
use dynanav::scene::{generate_scene, shortest_path, SceneParams};
use dynanav::sim::{Action, TrajectoryLog, TrajectoryRow, MAX_ANGULAR_SPEED, MAX_LINEAR_SPEED};
use dynanav::tasks::{make_episode, EnvConfig, NavEnv, TaskKind};

fn main() -> dynanav::Result<()> {
    let env = EnvConfig::default();
    let scene = Arc::new(generate_scene(4, &SceneParams::default())?);
    let spec = make_episode(&scene, &mut stream(4, "example-episode", 0), TaskKind::PointNav, 0, &env.task)?;
    let path = shortest_path(&scene, spec.start.position, spec.goal, env.task.agent_clearance)?;
    println!("shortest path {:.2} m", spec.shortest_path_length);
    let (mut e, _) = NavEnv::reset(Arc::clone(&scene), spec, &env)?;
    let mut log = TrajectoryLog::default();
    let mut waypoint = 1;
    while !e.is_done() {
        let a = e.agent();
        let pts = path.points();
        while waypoint + 1 < pts.len() && a.position.distance(pts[waypoint]) < 0.15 {
            waypoint += 1;
        }
        let target = pts[waypoint];
        let bearing = dynanav::geom::normalize_angle((target - a.position).angle() - a.heading);
        let near_goal = a.position.distance(pts[pts.len() - 1]) < 0.1;
        let action = if near_goal {
            Action::STOP
        } else {
            let turn = (2.0 * bearing).clamp(-MAX_ANGULAR_SPEED, MAX_ANGULAR_SPEED);
            let speed = if bearing.abs() > 0.5 { 0.0 } else { MAX_LINEAR_SPEED * (1.0 - bearing.abs()) };
            Action::new(speed, if speed == 0.0 && turn.abs() < 0.2 * MAX_ANGULAR_SPEED { 0.2 * MAX_ANGULAR_SPEED * turn.signum() } else { turn })
        };
        let out = e.step(action)?;
        let a = e.agent();
        log.push(TrajectoryRow {
            step: e.stats().steps,
            x: a.position.x,
            y: a.position.y,
            heading: a.heading,
            v: action.linear,
            omega: action.angular,
            reward: out.reward,
            backward: out.flags.backward,
            collided: out.flags.collided,
            success: out.flags.success,
            ped_collision: out.flags.ped_collision,
            timeout: out.flags.timeout,
        });
    }
    let s = e.stats();
    println!(
        "{} after {} steps: path {:.2} m, return {:.3}",
        if s.success { "success" } else { "failure" },
        s.steps,
        s.path_length,
        s.episode_return
    );
    if let Some(p) = std::env::args().nth(1) {
        log.write_csv(&p)?;
        println!("trajectory written to {p}");
    }
    Ok(())
}
