use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::objects::{circle_square_contact, push_object, MovableObject};
use super::pedestrian::Pedestrian;
use crate::geom::{normalize_angle, Vec2};
use crate::scene::{OccupancyGrid, Scene};

pub const MAX_LINEAR_SPEED: f64 = 0.5;
pub const MAX_ANGULAR_SPEED: f64 = FRAC_PI_2;
/// Both commanded speeds below this fraction of their maxima means "stop".
pub const STOP_FRACTION: f64 = 0.1;

/// Velocity command; components are clamped to the robot's limits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub linear: f64,
    pub angular: f64,
}

impl Action {
    pub fn new(linear: f64, angular: f64) -> Self {
        let clamp = |v: f64, max: f64| if v.is_nan() { 0.0 } else { v.clamp(-max, max) };
        Action {
            linear: clamp(linear, MAX_LINEAR_SPEED),
            angular: clamp(angular, MAX_ANGULAR_SPEED),
        }
    }

    pub const STOP: Action = Action {
        linear: 0.0,
        angular: 0.0,
    };

    /// Components scaled to [-1, 1].
    pub fn normalized(&self) -> [f64; 2] {
        [self.linear / MAX_LINEAR_SPEED, self.angular / MAX_ANGULAR_SPEED]
    }
}

/// True iff both commanded speeds are below 10% of their maxima.
pub fn detect_stop(action: &Action) -> bool {
    action.linear.abs() < STOP_FRACTION * MAX_LINEAR_SPEED && action.angular.abs() < STOP_FRACTION * MAX_ANGULAR_SPEED
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    /// Radians in (-π, π].
    pub heading: f64,
    pub radius: f64,
    pub collided_this_step: bool,
    pub moved_backward_this_step: bool,
}

impl AgentState {
    pub fn new(position: Vec2, heading: f64, radius: f64) -> Self {
        assert!(radius > 0.0, "agent radius must be positive");
        AgentState {
            position,
            heading: normalize_angle(heading),
            radius,
            collided_this_step: false,
            moved_backward_this_step: false,
        }
    }
}

/// Whether a disc overlaps any non-free cell.
pub fn circle_hits_grid(grid: &OccupancyGrid, center: Vec2, radius: f64) -> bool {
    let res = grid.resolution();
    let x0 = ((center.x - radius) / res).floor() as isize;
    let x1 = ((center.x + radius) / res).floor() as isize;
    let y0 = ((center.y - radius) / res).floor() as isize;
    let y1 = ((center.y + radius) / res).floor() as isize;
    let r2 = radius * radius;
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            if grid.get_signed(ix, iy).is_free() {
                continue;
            }
            let lo = Vec2::new(ix as f64 * res, iy as f64 * res);
            let q = Vec2::new(center.x.clamp(lo.x, lo.x + res), center.y.clamp(lo.y, lo.y + res));
            let d = center - q;
            if d.dot(d) < r2 {
                return true;
            }
        }
    }
    false
}

/// Largest fraction `t ∈ [0, 1]` of `delta` the disc can travel from `from`
/// without touching a wall (bisection, ~1e-4 of a step).
fn free_travel(grid: &OccupancyGrid, from: Vec2, delta: Vec2, radius: f64) -> f64 {
    if !circle_hits_grid(grid, from + delta, radius) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..14 {
        let mid = 0.5 * (lo + hi);
        if circle_hits_grid(grid, from + delta * mid, radius) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Advances the agent one control period under unicycle kinematics.
///
/// Heading is integrated first, then the agent translates along the new
/// heading. Wall contact is resolved axis by axis so the agent slides along
/// walls. Contact with a movable object pushes it and leaves the agent
/// touching it. Either contact sets `collided_this_step`.
pub fn step_agent(
    state: &AgentState,
    action: &Action,
    scene: &Scene,
    objects: &mut [MovableObject],
    dt: f64,
) -> AgentState {
    let grid = scene.grid();
    let heading = normalize_angle(state.heading + action.angular * dt);
    let delta = Vec2::from_angle(heading) * (action.linear * dt);
    let mut pos = state.position;
    let mut collided = false;

    for axis in [Vec2::new(delta.x, 0.0), Vec2::new(0.0, delta.y)] {
        if axis == Vec2::ZERO {
            continue;
        }
        let t = free_travel(grid, pos, axis, state.radius);
        if t < 1.0 {
            collided = true;
        }
        pos += axis * t;
    }

    for i in 0..objects.len() {
        let Some(contact) = circle_square_contact(pos, state.radius, &objects[i], delta) else {
            continue;
        };
        collided = true;
        let (before, after) = objects.split_at_mut(i);
        let (obj, rest) = after.split_first_mut().expect("index in range");
        let blockers: Vec<&MovableObject> = before.iter().chain(rest.iter()).collect();
        *obj = push_object(obj, &contact, scene, &blockers);
        // residual overlap stops the agent at the object's surface
        if let Some(residual) = circle_square_contact(pos, state.radius, obj, delta) {
            pos -= residual.normal * residual.depth;
        }
    }
    if pos != state.position && circle_hits_grid(grid, pos, state.radius) {
        pos = state.position;
        collided = true;
    }

    AgentState {
        position: pos,
        heading,
        radius: state.radius,
        collided_this_step: collided,
        moved_backward_this_step: action.linear < 0.0,
    }
}

/// True iff any pedestrian center is closer than `threshold` to the agent's.
pub fn check_pedestrian_collision(agent: &AgentState, peds: &[Pedestrian], threshold: f64) -> bool {
    peds.iter().any(|p| p.position().distance(agent.position) < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::OccupancyGrid;

    fn room() -> Scene {
        Scene::new("r", OccupancyGrid::empty_room(0.05, 100, 60).unwrap(), 0)
    }

    #[test]
    fn action_clamps() {
        let a = Action::new(0.9, -3.0);
        assert_eq!(a.linear, 0.5);
        assert_eq!(a.angular, -FRAC_PI_2);
        assert_eq!(Action::new(f64::NAN, 0.1).linear, 0.0);
    }

    #[test]
    fn stop_thresholds() {
        assert!(detect_stop(&Action::new(0.0, 0.0)));
        assert!(!detect_stop(&Action::new(0.06, 0.0)));
        assert!(detect_stop(&Action::new(0.04, 0.1)));
        assert!(!detect_stop(&Action::new(0.0, 0.16)));
        assert!(!detect_stop(&Action::new(0.05, 0.0)));
    }

    #[test]
    fn straight_and_turning_integration() {
        let s = room();
        let a = AgentState::new(Vec2::new(2.0, 1.5), 0.0, 0.18);
        let b = step_agent(&a, &Action::new(0.5, 0.0), &s, &mut [], 0.1);
        assert!((b.position.x - 2.05).abs() < 1e-12);
        assert_eq!(b.position.y, 1.5);
        assert!(!b.collided_this_step);

        let c = step_agent(&a, &Action::new(0.0, FRAC_PI_2), &s, &mut [], 0.1);
        assert!((c.heading - 0.05 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(c.position, a.position);
    }

    #[test]
    fn backward_flag_follows_command() {
        let s = room();
        let a = AgentState::new(Vec2::new(2.0, 1.5), 0.0, 0.18);
        let b = step_agent(&a, &Action::new(-0.2, 0.0), &s, &mut [], 0.1);
        assert!(b.moved_backward_this_step);
        assert!((b.position.x - 1.98).abs() < 1e-12);
    }

    #[test]
    fn wall_stops_and_sets_flag() {
        let s = room();
        // east wall occupies x in [4.95, 5.0); contact when x = 4.95 - 0.18
        let mut a = AgentState::new(Vec2::new(4.5, 1.5), 0.0, 0.18);
        let mut hit = false;
        for _ in 0..20 {
            a = step_agent(&a, &Action::new(0.5, 0.0), &s, &mut [], 0.1);
            hit |= a.collided_this_step;
        }
        assert!(hit);
        assert!((a.position.x - 4.77).abs() < 0.05, "x = {}", a.position.x);
        assert!(!circle_hits_grid(s.grid(), a.position, a.radius));
    }

    #[test]
    fn slides_along_wall() {
        let s = room();
        let a = AgentState::new(Vec2::new(4.76, 1.5), std::f64::consts::FRAC_PI_4, 0.18);
        let b = step_agent(&a, &Action::new(0.5, 0.0), &s, &mut [], 0.1);
        assert!(b.collided_this_step);
        assert!(b.position.y > a.position.y + 0.03);
    }

    #[test]
    fn pedestrian_collision_threshold() {
        use crate::scene::PathPolyline;
        let agent = AgentState::new(Vec2::new(1.0, 1.0), 0.0, 0.18);
        let ped_at = |x: f64| {
            let path = PathPolyline::new(vec![Vec2::new(x, 1.0), Vec2::new(x + 3.0, 1.0)]).unwrap();
            Pedestrian::new(path, 0.0, 1.0, 0.5, 0.3)
        };
        assert!(!check_pedestrian_collision(&agent, &[ped_at(1.31)], 0.3));
        assert!(check_pedestrian_collision(&agent, &[ped_at(1.29)], 0.3));
        assert!(!check_pedestrian_collision(&agent, &[], 0.3));
    }
}
