use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_file_name, Checkpoint};
use super::ppo::{synchronized_update, GaeConfig, LearnerState, PpoConfig, UpdateStats};
use super::rollout::{EpisodeSource, Segment, Worker};
use crate::augment::AugmentPipeline;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyConfig};
use crate::scene::Scene;
use crate::sim::{MAX_ANGULAR_SPEED, MAX_LINEAR_SPEED};
use crate::tasks::{EnvConfig, TaskKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    /// Steps per environment per update.
    pub rollout_len: usize,
    pub envs_per_worker: usize,
    pub workers: usize,
    pub checkpoint_interval: u64,
    /// Per-episode smoothing factor of the logged success rate.
    pub success_ema_alpha: f64,
    pub ppo: PpoConfig,
    pub gae: GaeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 2_000_000,
            rollout_len: 128,
            envs_per_worker: 4,
            workers: 8,
            checkpoint_interval: 1_000_000,
            success_ema_alpha: 0.05,
            ppo: PpoConfig::default(),
            gae: GaeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.gae.validate()?;
        if self.workers == 0 || self.envs_per_worker == 0 || self.rollout_len == 0 || self.checkpoint_interval == 0 {
            return Err(Error::InvalidParam("workers, envs, rollout length and checkpoint interval must be positive".into()));
        }
        if self.rollout_len % self.ppo.chunk_len != 0 {
            return Err(Error::InvalidParam(format!(
                "chunk length {} must divide rollout length {}",
                self.ppo.chunk_len, self.rollout_len
            )));
        }
        let chunks = self.envs_per_worker * self.rollout_len / self.ppo.chunk_len;
        if chunks < self.ppo.minibatches {
            return Err(Error::InvalidParam(format!("{chunks} chunks per worker cannot form {} minibatches", self.ppo.minibatches)));
        }
        if !(0.0..=1.0).contains(&self.success_ema_alpha) {
            return Err(Error::InvalidParam("success_ema_alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.workers * self.envs_per_worker * self.rollout_len) as u64
    }
}

/// Everything that defines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSetup {
    pub policy: PolicyConfig,
    pub env: EnvConfig,
    pub task: TaskKind,
    pub augment: AugmentPipeline,
    pub train: TrainConfig,
    pub seed: u64,
}

impl TrainSetup {
    /// Policy config with the input size implied by the sensor and the
    /// augmentation pipeline, and action bounds from the robot limits.
    pub fn effective_policy(&self) -> PolicyConfig {
        let (h, w) = self.augment.output_dims(self.env.sensor.height, self.env.sensor.width);
        PolicyConfig {
            input_height: h,
            input_width: w,
            max_linear: MAX_LINEAR_SPEED,
            max_angular: MAX_ANGULAR_SPEED,
            ..self.policy.clone()
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub update: u64,
    pub step: u64,
    pub episodes: usize,
    /// Mean return of episodes finished during this update (NaN if none).
    pub mean_return: f64,
    pub success_ema: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub steps_per_sec: f64,
}

/// Synchronous multi-worker PPO trainer.
pub struct Trainer {
    setup: TrainSetup,
    policy: Policy,
    source: EpisodeSource,
    state: LearnerState<f32>,
    workers: Vec<Worker<f32>>,
    step: u64,
    update: u64,
    generation: u64,
    success_ema: f64,
    last_checkpoint: u64,
}

impl Trainer {
    pub fn new(setup: TrainSetup, scenes: Vec<Arc<Scene>>) -> Result<Self> {
        let policy = Policy::new(setup.effective_policy())?;
        let params = policy.init_params(setup.seed);
        Self::assemble(setup, scenes, policy, LearnerState::new(params), 0, 0, 0, 0.0)
    }

    /// Continues a run from a checkpoint written by [`Trainer::run`].
    pub fn resume(setup: TrainSetup, scenes: Vec<Arc<Scene>>, checkpoint: impl AsRef<Path>) -> Result<Self> {
        let policy = Policy::new(setup.effective_policy())?;
        let ck = Checkpoint::load(checkpoint, Some(policy.config().hash()))?;
        if ck.state.params.len() != policy.num_params() {
            return Err(Error::DimMismatch("checkpoint parameter count".into()));
        }
        Self::assemble(setup, scenes, policy, ck.state, ck.step, ck.update, ck.generation, ck.success_ema)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        setup: TrainSetup,
        scenes: Vec<Arc<Scene>>,
        policy: Policy,
        state: LearnerState<f32>,
        step: u64,
        update: u64,
        generation: u64,
        success_ema: f64,
    ) -> Result<Self> {
        setup.train.validate()?;
        let source = EpisodeSource::new(scenes, setup.task, setup.augment.train_ped_count, setup.env.clone())?;
        let mut t = Trainer {
            setup,
            policy,
            source,
            state,
            workers: Vec::new(),
            step,
            update,
            generation,
            success_ema,
            last_checkpoint: step,
        };
        t.spawn_workers()?;
        Ok(t)
    }

    fn spawn_workers(&mut self) -> Result<()> {
        let (src, pipe, policy) = (&self.source, &self.setup.augment, &self.policy);
        let (seed, generation, envs) = (self.setup.seed, self.generation, self.setup.train.envs_per_worker);
        self.workers = (0..self.setup.train.workers)
            .into_par_iter()
            .map(|id| Worker::new(id, envs, src, pipe, policy, seed, generation))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    pub fn setup(&self) -> &TrainSetup {
        &self.setup
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn params(&self) -> &[f32] {
        &self.state.params
    }

    pub fn state(&self) -> &LearnerState<f32> {
        &self.state
    }

    pub fn workers(&self) -> &[Worker<f32>] {
        &self.workers
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn updates(&self) -> u64 {
        self.update
    }

    pub fn success_ema(&self) -> f64 {
        self.success_ema
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.policy.config().hash(),
            step: self.step,
            update: self.update,
            generation: self.generation,
            success_ema: self.success_ema,
            state: self.state.clone(),
        }
    }

    /// Collects one segment per worker in parallel, then applies the
    /// synchronized update. A non-finite loss skips the update.
    pub fn train_update(&mut self) -> Result<TrainLogRow> {
        let started = Instant::now();
        let (policy, params, src, pipe) = (&self.policy, &self.state.params, &self.source, &self.setup.augment);
        let len = self.setup.train.rollout_len;
        let segments: Vec<Segment<f32>> = self
            .workers
            .par_iter_mut()
            .map(|w| {
                let id = w.id();
                w.collect(policy, params, len, src, pipe).map_err(|e| Error::WorkerFailed {
                    worker: id,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        let cfg = &self.setup.train;
        let stats = match synchronized_update(&self.policy, &mut self.state, &segments, &cfg.ppo, &cfg.gae, self.setup.seed, self.update) {
            Ok(s) => s,
            Err(Error::NonFiniteLoss) => UpdateStats {
                policy_loss: f64::NAN,
                value_loss: f64::NAN,
                ..Default::default()
            },
            Err(e) => return Err(e),
        };
        self.update += 1;
        self.step += cfg.steps_per_update();

        let mut episodes = 0;
        let mut return_sum = 0.0;
        for ep in segments.iter().flat_map(|s| &s.finished) {
            episodes += 1;
            return_sum += ep.episode_return;
            let s = if ep.success { 1.0 } else { 0.0 };
            self.success_ema += cfg.success_ema_alpha * (s - self.success_ema);
        }
        Ok(TrainLogRow {
            update: self.update,
            step: self.step,
            episodes,
            mean_return: if episodes > 0 { return_sum / episodes as f64 } else { f64::NAN },
            success_ema: self.success_ema,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            grad_norm: stats.grad_norm,
            steps_per_sec: cfg.steps_per_update() as f64 / started.elapsed().as_secs_f64(),
        })
    }

    /// Checkpoint boundary: advances the worker generation, rebuilds the
    /// workers and, given a directory, writes the checkpoint. Resuming
    /// from that file continues exactly as this run does.
    pub fn checkpoint_boundary(&mut self, dir: Option<&Path>) -> Result<Option<PathBuf>> {
        self.generation += 1;
        self.last_checkpoint = self.step;
        self.spawn_workers()?;
        let Some(dir) = dir else { return Ok(None) };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(checkpoint_file_name(self.step));
        self.checkpoint().save(&path)?;
        log::info!("checkpoint at step {} -> {}", self.step, path.display());
        Ok(Some(path))
    }

    /// Trains until `total_steps`, writing `train_log.csv` and checkpoints
    /// under `out` when given. `on_update` may stop training early by
    /// returning false. The final state is always checkpointed.
    pub fn run(&mut self, out: Option<&Path>, mut on_update: impl FnMut(&Trainer, &TrainLogRow) -> bool) -> Result<()> {
        let ckpt_dir = out.map(|o| o.join("checkpoints"));
        let mut log = match out {
            Some(o) => {
                std::fs::create_dir_all(o)?;
                let path = o.join("train_log.csv");
                let fresh = !path.exists();
                let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
                Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))
            }
            None => None,
        };
        let interval = self.setup.train.checkpoint_interval;
        while self.step < self.setup.train.total_steps {
            let row = self.train_update()?;
            log::info!(
                "update {} step {} success_ema {:.3} return {:.3} {:.0} steps/s",
                row.update,
                row.step,
                row.success_ema,
                row.mean_return,
                row.steps_per_sec
            );
            if let Some(w) = log.as_mut() {
                w.serialize(&row)?;
                w.flush()?;
            }
            let keep_going = on_update(self, &row);
            if self.step / interval > self.last_checkpoint / interval {
                self.checkpoint_boundary(ckpt_dir.as_deref())?;
            }
            if !keep_going {
                break;
            }
        }
        if self.step != self.last_checkpoint || self.update == 0 {
            self.checkpoint_boundary(ckpt_dir.as_deref())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::BlockSpec;
    use crate::scene::{generate_scene, SceneParams};
    use crate::sim::SensorConfig;

    pub(crate) fn tiny_setup(peds: usize) -> (TrainSetup, Vec<Arc<Scene>>) {
        let scene = Arc::new(generate_scene(5, &SceneParams::empty_room(5.0, 5.0)).unwrap());
        let setup = TrainSetup {
            policy: PolicyConfig {
                stem_channels: 4,
                blocks: vec![BlockSpec { channels: 4, stride: 2 }],
                feature_dim: 8,
                hidden: 6,
                ..Default::default()
            },
            env: EnvConfig {
                sensor: SensorConfig {
                    width: 16,
                    height: 16,
                    ..Default::default()
                },
                ..Default::default()
            },
            task: TaskKind::PointNav,
            augment: AugmentPipeline::new(vec![], peds),
            train: TrainConfig {
                total_steps: 96,
                rollout_len: 8,
                envs_per_worker: 2,
                workers: 2,
                checkpoint_interval: 64,
                ppo: PpoConfig {
                    chunk_len: 4,
                    ..Default::default()
                },
                ..Default::default()
            },
            seed: 11,
        };
        (setup, vec![scene])
    }

    #[test]
    fn effective_policy_follows_crop() {
        let (mut setup, _) = tiny_setup(0);
        setup.augment = AugmentPipeline::parse("crop", 0).unwrap();
        let p = setup.effective_policy();
        assert_eq!((p.input_height, p.input_width), (14, 14));
    }

    #[test]
    fn training_spawns_configured_pedestrians() {
        let (setup, scenes) = tiny_setup(6);
        let t = Trainer::new(setup, scenes).unwrap();
        for w in t.workers() {
            for env in w.envs() {
                assert_eq!(env.pedestrians().len(), 6);
            }
        }
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let (setup, scenes) = tiny_setup(1);
        let dir = tempfile::tempdir().unwrap();
        let mut full = Trainer::new(setup.clone(), scenes.clone()).unwrap();
        full.run(Some(dir.path()), |_, _| true).unwrap();
        assert_eq!(full.step(), 96);

        // checkpoint at 64 steps (two updates of 32), then resume for the rest
        let ck = dir.path().join("checkpoints").join(checkpoint_file_name(64));
        let mut resumed = Trainer::resume(setup, scenes, &ck).unwrap();
        assert_eq!(resumed.step(), 64);
        resumed.run(None, |_, _| true).unwrap();
        assert_eq!(resumed.params(), full.params());
        assert_eq!(resumed.state(), full.state());

        let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + 3);
    }

    #[test]
    fn rejects_bad_config() {
        let (mut setup, scenes) = tiny_setup(0);
        setup.train.ppo.chunk_len = 3;
        assert!(Trainer::new(setup, scenes).is_err());
    }
}
