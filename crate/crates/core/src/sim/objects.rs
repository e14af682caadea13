use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::scene::{OccupancyGrid, Scene};

/// A pushable box with a square, axis-aligned footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovableObject {
    pub position: Vec2,
    pub half_extent: f64,
    /// Kilograms.
    pub mass: f64,
    /// Accumulated translation magnitude in meters.
    pub total_displacement: f64,
    pub push_count: u32,
}

impl MovableObject {
    pub fn new(position: Vec2, half_extent: f64, mass: f64) -> Self {
        MovableObject {
            position,
            half_extent,
            mass,
            total_displacement: 0.0,
            push_count: 0,
        }
    }

    fn overlaps_square(&self, at: Vec2, other: &MovableObject) -> bool {
        let reach = self.half_extent + other.half_extent;
        (at.x - other.position.x).abs() < reach && (at.y - other.position.y).abs() < reach
    }
}

/// Penetration of the agent disc into an object; `normal` points from the
/// agent into the object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub normal: Vec2,
    pub depth: f64,
}

pub(crate) fn circle_square_contact(center: Vec2, radius: f64, obj: &MovableObject, motion: Vec2) -> Option<Contact> {
    let h = obj.half_extent;
    let lo = obj.position - Vec2::new(h, h);
    let hi = obj.position + Vec2::new(h, h);
    let q = Vec2::new(center.x.clamp(lo.x, hi.x), center.y.clamp(lo.y, hi.y));
    let d = q - center;
    let dist = d.norm();
    if dist >= radius {
        return None;
    }
    if dist > 1e-12 {
        return Some(Contact {
            normal: d * (1.0 / dist),
            depth: radius - dist,
        });
    }
    // center inside the footprint: push along the motion, else away from center
    let dir = if motion.norm() > 1e-12 {
        motion
    } else if (obj.position - center).norm() > 1e-12 {
        obj.position - center
    } else {
        Vec2::new(1.0, 0.0)
    };
    Some(Contact {
        normal: dir * (1.0 / dir.norm()),
        depth: radius + h,
    })
}

fn square_hits_grid(grid: &OccupancyGrid, center: Vec2, h: f64) -> bool {
    let res = grid.resolution();
    let eps = 1e-9;
    let x0 = ((center.x - h + eps) / res).floor() as isize;
    let x1 = ((center.x + h - eps) / res).floor() as isize;
    let y0 = ((center.y - h + eps) / res).floor() as isize;
    let y1 = ((center.y + h - eps) / res).floor() as isize;
    (y0..=y1).any(|iy| (x0..=x1).any(|ix| !grid.get_signed(ix, iy).is_free()))
}

/// Quasi-static push: the object slides along the contact normal by the
/// penetration depth scaled by `1/(1+mass)`, clipped so it never enters a
/// wall cell or another object.
pub fn push_object(obj: &MovableObject, contact: &Contact, scene: &Scene, blockers: &[&MovableObject]) -> MovableObject {
    let grid = scene.grid();
    let wanted = contact.normal * (contact.depth / (1.0 + obj.mass));
    let blocked = |at: Vec2| square_hits_grid(grid, at, obj.half_extent) || blockers.iter().any(|b| obj.overlaps_square(at, b));
    let t = if !blocked(obj.position + wanted) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..14 {
            let mid = 0.5 * (lo + hi);
            if blocked(obj.position + wanted * mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let applied = wanted * t;
    MovableObject {
        position: obj.position + applied,
        total_displacement: obj.total_displacement + applied.norm(),
        push_count: obj.push_count + 1,
        ..*obj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::OccupancyGrid;
    use crate::sim::{step_agent, Action, AgentState};

    fn room() -> Scene {
        Scene::new("r", OccupancyGrid::empty_room(0.05, 100, 60).unwrap(), 0)
    }

    #[test]
    fn push_formula() {
        let s = room();
        let obj = MovableObject::new(Vec2::new(2.0, 1.5), 0.1, 1.0);
        let c = Contact {
            normal: Vec2::new(1.0, 0.0),
            depth: 0.02,
        };
        let moved = push_object(&obj, &c, &s, &[]);
        assert!((moved.position.x - 2.01).abs() < 1e-12);
        assert!((moved.total_displacement - 0.01).abs() < 1e-12);
        assert_eq!(moved.push_count, 1);
    }

    #[test]
    fn flush_against_wall_does_not_move() {
        let s = room();
        // east wall starts at x = 4.95
        let obj = MovableObject::new(Vec2::new(4.85, 1.5), 0.1, 1.0);
        let c = Contact {
            normal: Vec2::new(1.0, 0.0),
            depth: 0.02,
        };
        let moved = push_object(&obj, &c, &s, &[]);
        assert!(moved.total_displacement < 1e-6);
        assert!(moved.position.x <= 4.85 + 1e-6);

        let mut objs = [obj];
        let agent = AgentState::new(Vec2::new(4.85 - 0.1 - 0.18 - 0.001, 1.5), 0.0, 0.18);
        let after = step_agent(&agent, &Action::new(0.5, 0.0), &s, &mut objs, 0.1);
        assert!(after.collided_this_step);
        assert!(after.position.x < agent.position.x + 0.002);
    }

    #[test]
    fn pushing_accumulates_displacement() {
        let s = room();
        let mut objs = [MovableObject::new(Vec2::new(1.5, 1.5), 0.1, 1.0)];
        let mut agent = AgentState::new(Vec2::new(1.0, 1.5), 0.0, 0.18);
        let mut ledger = 0.0;
        let mut travelled = 0.0;
        for _ in 0..60 {
            let before = objs[0];
            let prev = agent.position;
            agent = step_agent(&agent, &Action::new(0.5, 0.0), &s, &mut objs, 0.1);
            travelled += agent.position.distance(prev);
            ledger += objs[0].position.distance(before.position);
            assert!(objs[0].total_displacement >= before.total_displacement);
        }
        assert!(objs[0].push_count > 10);
        assert!((objs[0].total_displacement - ledger).abs() < 1e-9);
        assert!(objs[0].total_displacement <= travelled + 1e-9);
    }
}
