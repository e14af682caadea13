use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{compute_reward, goal_vector, EnvConfig, EpisodeSpec, StepFlags, TaskKind};
use crate::augment::populate_pedestrians;
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Pose};
use crate::rng::{self, Rng};
use crate::scene::{compute_distance_field, DistanceField, Scene};
use crate::sim::{
    check_pedestrian_collision, detect_stop, render_depth, step_agent, step_pedestrians, Action, AgentState,
    DepthImage, MovableObject, Pedestrian,
};

/// Resamples of a pedestrian's start position that spawned too close to the agent.
const SPAWN_RETRIES: usize = 100;

/// What the policy sees each step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    /// Distance to the goal in the dead-reckoned frame (m).
    pub goal_distance: f64,
    /// Bearing of the goal relative to the dead-reckoned heading (rad).
    pub goal_heading: f64,
    pub prev_action: Action,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub flags: StepFlags,
}

/// Running totals of one episode, read by the evaluator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    pub steps: u32,
    pub success: bool,
    pub stopped: bool,
    pub ped_collision: bool,
    pub timeout: bool,
    /// Distance actually traveled by the agent.
    pub path_length: f64,
    /// Σ mass × displacement over movable objects.
    pub object_effort: f64,
    pub shortest_path_length: f64,
    pub episode_return: f64,
}

/// One episode in progress. Owned by a single worker.
#[derive(Clone, Debug)]
pub struct NavEnv {
    scene: Arc<Scene>,
    cfg: EnvConfig,
    spec: EpisodeSpec,
    goal_field: DistanceField,
    agent: AgentState,
    odometry: Pose,
    odometry_rng: Rng,
    peds: Vec<Pedestrian>,
    objects: Vec<MovableObject>,
    prev_action: Action,
    prev_distance: f64,
    done: bool,
    stats: EpisodeStats,
}

impl NavEnv {
    /// Instantiates the episode and renders the first observation.
    pub fn reset(scene: Arc<Scene>, spec: EpisodeSpec, cfg: &EnvConfig) -> Result<(NavEnv, Observation)> {
        cfg.validate()?;
        if spec.scene_id != scene.id() {
            return Err(Error::InvalidParam(format!(
                "episode for scene {} reset on {}",
                spec.scene_id,
                scene.id()
            )));
        }
        let goal_field = compute_distance_field(&scene, spec.goal)?;
        let agent = AgentState::new(spec.start.position, spec.start.heading, cfg.sim.agent_radius);

        let mut ped_rng = rng::stream(spec.seed, "pedestrians", 0);
        let mut peds = populate_pedestrians(&scene, spec.ped_count, &mut ped_rng, &cfg.pedestrians)?;
        for p in &mut peds {
            let mut tries = 0;
            while p.position().distance(agent.position) < cfg.task.ped_spawn_clearance && tries < SPAWN_RETRIES {
                p.set_arc_position(ped_rng.gen_range(0.0..=p.path().length()));
                tries += 1;
            }
        }
        let objects = spec
            .objects
            .iter()
            .map(|&p| MovableObject::new(p, cfg.sim.object_half_extent, cfg.sim.object_mass))
            .collect();

        let prev_distance = finite_distance(&goal_field, &agent)?;
        let env = NavEnv {
            odometry: spec.start,
            odometry_rng: rng::stream(spec.seed, "odometry", 0),
            stats: EpisodeStats {
                shortest_path_length: spec.shortest_path_length,
                ..Default::default()
            },
            scene,
            cfg: cfg.clone(),
            spec,
            goal_field,
            agent,
            peds,
            objects,
            prev_action: Action::STOP,
            prev_distance,
            done: false,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn agent(&self) -> &AgentState {
        &self.agent
    }

    /// Dead-reckoned pose.
    pub fn odometry(&self) -> &Pose {
        &self.odometry
    }

    pub fn pedestrians(&self) -> &[Pedestrian] {
        &self.peds
    }

    pub fn objects(&self) -> &[MovableObject] {
        &self.objects
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    /// Geodesic distance from the agent's true position to the goal.
    pub fn geodesic_to_goal(&self) -> f64 {
        self.prev_distance
    }

    fn ped_collision_enabled(&self) -> bool {
        self.spec.task != TaskKind::InteractiveNav && !self.peds.is_empty()
    }

    /// Renders the current view; the sensor noise seed changes every step.
    pub fn observe(&self) -> Observation {
        let mut sensor = self.cfg.sensor.clone();
        sensor.noise_seed = rng::sub_seed(self.spec.seed ^ self.cfg.sensor.noise_seed, "sensor", self.stats.steps as u64);
        let pose = Pose::new(self.agent.position, self.agent.heading);
        let depth = render_depth(&self.scene, &self.objects, &self.peds, &pose, &sensor, &self.cfg.sim);
        let (goal_distance, goal_heading) = goal_vector(&self.odometry, self.spec.goal);
        Observation {
            depth,
            goal_distance,
            goal_heading,
            prev_action: self.prev_action,
        }
    }

    /// Advances one control period: stop check, then pedestrians and agent,
    /// then pedestrian collision, then timeout, then reward.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let action = Action::new(action.linear, action.angular);
        let task = self.cfg.task.clone();
        let d_prev = self.prev_distance;
        let mut flags = StepFlags::default();
        self.stats.steps += 1;

        let d_new = if detect_stop(&action) {
            flags.stopped = true;
            flags.success = self.agent.position.distance(self.spec.goal) < task.success_distance;
            d_prev
        } else {
            step_pedestrians(&mut self.peds, self.cfg.sim.dt);
            let before = self.agent;
            self.agent = step_agent(&before, &action, &self.scene, &mut self.objects, self.cfg.sim.dt);
            flags.backward = self.agent.moved_backward_this_step;
            flags.collided = self.agent.collided_this_step;
            self.integrate_odometry(&before);
            self.stats.path_length += self.agent.position.distance(before.position);
            if self.ped_collision_enabled()
                && check_pedestrian_collision(&self.agent, &self.peds, task.ped_collision_distance)
            {
                flags.ped_collision = true;
            } else if self.stats.steps >= task.max_steps {
                flags.timeout = true;
            }
            finite_distance(&self.goal_field, &self.agent)?
        };

        let reward = compute_reward(d_prev, d_new, &flags, &self.cfg.reward);
        self.prev_distance = d_new;
        self.prev_action = action;
        self.done = flags.is_terminal();
        self.stats.episode_return += reward;
        self.stats.object_effort = self.objects.iter().map(|o| o.mass * o.total_displacement).sum();
        if self.done {
            self.stats.success = flags.success;
            self.stats.stopped = flags.stopped;
            self.stats.ped_collision = flags.ped_collision;
            self.stats.timeout = flags.timeout;
        }
        Ok(StepOutcome {
            obs: self.observe(),
            reward,
            done: self.done,
            flags,
        })
    }

    /// Applies the realized body-frame motion to the dead-reckoned pose,
    /// plus optional Gaussian drift.
    fn integrate_odometry(&mut self, before: &AgentState) {
        let local = (self.agent.position - before.position).rotate(-before.heading);
        let mut turn = normalize_angle(self.agent.heading - before.heading);
        let mut shift = local.rotate(self.odometry.heading);
        let (st, sr) = (self.cfg.task.odometry_translation_std, self.cfg.task.odometry_rotation_std);
        if st > 0.0 {
            shift.x += st * self.odometry_rng.sample::<f64, _>(StandardNormal);
            shift.y += st * self.odometry_rng.sample::<f64, _>(StandardNormal);
        }
        if sr > 0.0 {
            turn += sr * self.odometry_rng.sample::<f64, _>(StandardNormal);
        }
        self.odometry = Pose::new(self.odometry.position + shift, self.odometry.heading + turn);
    }
}

fn finite_distance(field: &DistanceField, agent: &AgentState) -> Result<f64> {
    let d = field.geodesic_distance(agent.position)?;
    if !d.is_finite() {
        return Err(Error::NotNavigable {
            x: agent.position.x,
            y: agent.position.y,
        });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::scene::OccupancyGrid;
    use crate::sim::SensorFlavor;

    fn setup(start: Vec2, heading: f64, goal: Vec2, task: TaskKind, peds: usize) -> (NavEnv, Observation) {
        let scene = Arc::new(Scene::new("room", OccupancyGrid::empty_room(0.05, 160, 100).unwrap(), 0));
        let spec = EpisodeSpec {
            scene_id: "room".into(),
            start: Pose::new(start, heading),
            goal,
            task,
            ped_count: peds,
            objects: Vec::new(),
            shortest_path_length: start.distance(goal),
            seed: 7,
        };
        let mut cfg = EnvConfig::default();
        cfg.sensor.flavor = SensorFlavor::SyntheticClean;
        NavEnv::reset(scene, spec, &cfg).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let (a, oa) = setup(Vec2::new(1.0, 2.5), 0.0, Vec2::new(4.0, 2.5), TaskKind::SocialNav, 3);
        let (b, ob) = setup(Vec2::new(1.0, 2.5), 0.0, Vec2::new(4.0, 2.5), TaskKind::SocialNav, 3);
        assert_eq!(oa, ob);
        assert_eq!(a.pedestrians(), b.pedestrians());
        assert_eq!(a.odometry(), &a.spec().start);
        assert!((oa.goal_distance - 3.0).abs() < 1e-12);
        for p in a.pedestrians() {
            assert!(p.position().distance(Vec2::new(1.0, 2.5)) >= 1.0);
        }
    }

    #[test]
    fn stop_near_goal_succeeds() {
        let (mut env, _) = setup(Vec2::new(3.85, 2.5), 0.0, Vec2::new(4.0, 2.5), TaskKind::PointNav, 0);
        let out = env.step(Action::STOP).unwrap();
        assert!(out.done && out.flags.success);
        assert!((out.reward - 9.998).abs() < 1e-12);
        assert!(matches!(env.step(Action::STOP), Err(Error::EpisodeDone)));
    }

    #[test]
    fn stop_far_from_goal_fails() {
        let (mut env, _) = setup(Vec2::new(3.75, 2.5), 0.0, Vec2::new(4.0, 2.5), TaskKind::PointNav, 0);
        let out = env.step(Action::STOP).unwrap();
        assert!(out.done && !out.flags.success);
        assert!((out.reward + 0.002).abs() < 1e-12);
    }

    #[test]
    fn timeout_at_max_steps() {
        let (mut env, _) = setup(Vec2::new(1.0, 2.5), 0.0, Vec2::new(6.0, 2.5), TaskKind::PointNav, 0);
        for i in 1..=500 {
            let out = env.step(Action::new(0.0, 1.0)).unwrap();
            assert_eq!(out.done, i == 500);
            assert_eq!(out.flags.timeout, i == 500);
        }
    }

    #[test]
    fn straight_drive_updates_goal_vector() {
        let (mut env, _) = setup(Vec2::new(1.0, 2.5), 0.0, Vec2::new(4.0, 2.5), TaskKind::PointNav, 0);
        let d0 = env.geodesic_to_goal();
        let mut total = 0.0;
        let mut last = None;
        for _ in 0..20 {
            let out = env.step(Action::new(0.5, 0.0)).unwrap();
            total += out.reward;
            last = Some(out);
        }
        let obs = last.unwrap().obs;
        assert!((obs.goal_distance - 2.0).abs() < 1e-9);
        assert!(obs.goal_heading.abs() < 1e-9);
        assert!((total - (d0 - env.geodesic_to_goal() - 20.0 * 0.002)).abs() < 1e-9);
    }
}
