use crate::geom::Vec2;
use crate::scene::PathPolyline;

/// A pedestrian patrolling back and forth along a fixed path. It never
/// yields to the agent or to other pedestrians.
#[derive(Clone, Debug, PartialEq)]
pub struct Pedestrian {
    path: PathPolyline,
    arc_position: f64,
    direction: f64,
    speed: f64,
    radius: f64,
}

impl Pedestrian {
    pub fn new(path: PathPolyline, arc_position: f64, direction: f64, speed: f64, radius: f64) -> Self {
        let arc_position = arc_position.clamp(0.0, path.length());
        Pedestrian {
            path,
            arc_position,
            direction: if direction < 0.0 { -1.0 } else { 1.0 },
            speed,
            radius,
        }
    }

    pub fn path(&self) -> &PathPolyline {
        &self.path
    }

    pub fn arc_position(&self) -> f64 {
        self.arc_position
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn position(&self) -> Vec2 {
        self.path.point_at(self.arc_position)
    }

    pub(crate) fn set_arc_position(&mut self, s: f64) {
        self.arc_position = s.clamp(0.0, self.path.length());
    }

    /// Moves `speed·dt` along the path, mirroring any overshoot at an
    /// endpoint so no travel time is lost.
    pub fn advance(&mut self, dt: f64) {
        let len = self.path.length();
        if len <= 0.0 {
            self.arc_position = 0.0;
            return;
        }
        let mut s = self.arc_position + self.direction * self.speed * dt;
        while s > len || s < 0.0 {
            if s > len {
                s = 2.0 * len - s;
                self.direction = -1.0;
            } else {
                s = -s;
                self.direction = 1.0;
            }
        }
        if s == len && self.direction > 0.0 {
            self.direction = -1.0;
        } else if s == 0.0 && self.direction < 0.0 {
            self.direction = 1.0;
        }
        self.arc_position = s;
    }
}

pub fn step_pedestrians(peds: &mut [Pedestrian], dt: f64) {
    for p in peds {
        p.advance(dt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> PathPolyline {
        PathPolyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)]).unwrap()
    }

    #[test]
    fn reflects_at_far_end() {
        let mut p = Pedestrian::new(straight(4.0), 3.95, 1.0, 0.5, 0.3);
        p.advance(0.1);
        assert!((p.arc_position() - 4.0).abs() < 1e-12);
        assert_eq!(p.direction(), -1.0);
    }

    #[test]
    fn reflects_at_start() {
        let mut p = Pedestrian::new(straight(4.0), 0.02, -1.0, 0.5, 0.3);
        p.advance(0.1);
        assert!((p.arc_position() - 0.03).abs() < 1e-12);
        assert_eq!(p.direction(), 1.0);
    }

    #[test]
    fn long_run_stays_on_path() {
        let path = PathPolyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 1.7)]).unwrap();
        let mut peds = vec![Pedestrian::new(path, 1.0, 1.0, 0.47, 0.3)];
        for _ in 0..100_000 {
            step_pedestrians(&mut peds, 0.1);
            let s = peds[0].arc_position();
            assert!((0.0..=3.7).contains(&s));
        }
    }
}
