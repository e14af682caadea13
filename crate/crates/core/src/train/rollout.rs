use std::sync::Arc;

use rand::Rng as _;

use crate::augment::{apply_pipeline, AugmentMode, AugmentPipeline};
use crate::error::{Error, Result};
use crate::policy::{HiddenState, Policy, Real, AUX_DIM};
use crate::rng::{self, Rng};
use crate::scene::Scene;
use crate::tasks::{make_episode, EnvConfig, EpisodeSpec, EpisodeStats, NavEnv, Observation, TaskKind};

/// The training distribution: uniformly chosen scene, then a fresh
/// start/goal pair with the configured task content.
#[derive(Clone, Debug)]
pub struct EpisodeSource {
    pub scenes: Vec<Arc<Scene>>,
    pub task: TaskKind,
    pub ped_count: usize,
    pub env: EnvConfig,
}

impl EpisodeSource {
    pub fn new(scenes: Vec<Arc<Scene>>, task: TaskKind, ped_count: usize, env: EnvConfig) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::InvalidParam("training needs at least one scene".into()));
        }
        env.validate()?;
        Ok(EpisodeSource {
            scenes,
            task,
            ped_count,
            env,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<(Arc<Scene>, EpisodeSpec)> {
        let scene = Arc::clone(&self.scenes[rng.gen_range(0..self.scenes.len())]);
        let spec = make_episode(&scene, rng, self.task, self.ped_count, &self.env.task)?;
        Ok((scene, spec))
    }
}

/// One worker's rollout: `len` steps of `n_env` environments, stored
/// time-major (index `t·n_env + e`).
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub n_env: usize,
    pub len: usize,
    pub image_len: usize,
    pub images: Vec<T>,
    pub aux: Vec<T>,
    /// Recurrent state was zeroed before this step.
    pub starts: Vec<bool>,
    /// Unclamped action samples.
    pub actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// The episode ended with this step.
    pub dones: Vec<bool>,
    /// State entering each step, `[t·n_env + e][layers][hidden]`.
    pub h: Vec<T>,
    pub c: Vec<T>,
    /// Value of the observation following the last step, per environment.
    pub bootstrap: Vec<f64>,
    /// Episodes that finished inside this segment, in completion order.
    pub finished: Vec<EpisodeStats>,
}

impl<T: Real> Segment<T> {
    pub fn num_steps(&self) -> usize {
        self.n_env * self.len
    }

    /// Per-environment GAE, returned in the segment's time-major layout.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_steps();
        let (mut adv, mut ret) = (vec![0.0; n], vec![0.0; n]);
        for e in 0..self.n_env {
            let idx: Vec<usize> = (0..self.len).map(|t| t * self.n_env + e).collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let dones: Vec<bool> = idx.iter().map(|&i| self.dones[i]).collect();
            let (a, r) = super::compute_gae(&pick(&self.rewards), &pick(&self.values), &dones, self.bootstrap[e], gamma, lambda);
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = r[k];
            }
        }
        (adv, ret)
    }
}

/// A rollout worker: exclusively owns its environments, their recurrent
/// state and its random streams.
#[derive(Debug)]
pub struct Worker<T> {
    id: usize,
    envs: Vec<NavEnv>,
    obs: Vec<Observation>,
    hidden: Vec<HiddenState<T>>,
    fresh: Vec<bool>,
    episode_rng: Rng,
    action_rng: Rng,
    augment_rng: Rng,
}

impl<T: Real> Worker<T> {
    /// Builds worker `id` of `generation`, resetting every environment.
    pub fn new(
        id: usize,
        n_env: usize,
        source: &EpisodeSource,
        pipeline: &AugmentPipeline,
        policy: &Policy,
        seed: u64,
        generation: u64,
    ) -> Result<Self> {
        if n_env == 0 {
            return Err(Error::InvalidParam("a worker needs at least one environment".into()));
        }
        let base = rng::sub_seed(seed, "generation", generation);
        let mut w = Worker {
            id,
            envs: Vec::with_capacity(n_env),
            obs: Vec::with_capacity(n_env),
            hidden: vec![HiddenState::zeros(policy); n_env],
            fresh: vec![true; n_env],
            episode_rng: rng::stream(base, "episodes", id as u64),
            action_rng: rng::stream(base, "actions", id as u64),
            augment_rng: rng::stream(base, "augmentation", id as u64),
        };
        for _ in 0..n_env {
            let (env, obs) = w.new_episode(source, pipeline)?;
            w.envs.push(env);
            w.obs.push(obs);
        }
        Ok(w)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn envs(&self) -> &[NavEnv] {
        &self.envs
    }

    fn new_episode(&mut self, source: &EpisodeSource, pipeline: &AugmentPipeline) -> Result<(NavEnv, Observation)> {
        let (scene, spec) = source.sample(&mut self.episode_rng)?;
        let (env, obs) = NavEnv::reset(scene, spec, &source.env)?;
        let obs = apply_pipeline(&obs, pipeline, &mut self.augment_rng, AugmentMode::Train)?;
        Ok((env, obs))
    }

    /// Steps every environment `len` times with actions sampled from the
    /// policy, auto-resetting finished episodes.
    pub fn collect(
        &mut self,
        policy: &Policy,
        params: &[T],
        len: usize,
        source: &EpisodeSource,
        pipeline: &AugmentPipeline,
    ) -> Result<Segment<T>> {
        let n_env = self.envs.len();
        let n = n_env * len;
        let il = policy.image_len();
        let sl = policy.state_len(1);
        let mut seg = Segment {
            n_env,
            len,
            image_len: il,
            images: Vec::with_capacity(n * il),
            aux: Vec::with_capacity(n * AUX_DIM),
            starts: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            h: Vec::with_capacity(n * sl),
            c: Vec::with_capacity(n * sl),
            bootstrap: Vec::new(),
            finished: Vec::new(),
        };
        for _ in 0..len {
            for e in 0..n_env {
                policy.observation_input(&self.obs[e], &mut seg.images, &mut seg.aux)?;
                seg.h.extend_from_slice(&self.hidden[e].h);
                seg.c.extend_from_slice(&self.hidden[e].c);
                seg.starts.push(self.fresh[e]);
            }
            let heads = policy.act(params, &self.obs, &mut self.hidden)?;
            for (e, (dist, value)) in heads.into_iter().enumerate() {
                let (raw, action) = dist.sample(&mut self.action_rng);
                let out = self.envs[e].step(action)?;
                seg.actions.push(raw);
                seg.log_probs.push(dist.log_prob(raw));
                seg.values.push(value);
                seg.rewards.push(out.reward);
                seg.dones.push(out.done);
                if out.done {
                    seg.finished.push(self.envs[e].stats().clone());
                    let (env, obs) = self.new_episode(source, pipeline)?;
                    self.envs[e] = env;
                    self.obs[e] = obs;
                    self.hidden[e].reset();
                    self.fresh[e] = true;
                } else {
                    self.obs[e] = apply_pipeline(&out.obs, pipeline, &mut self.augment_rng, AugmentMode::Train)?;
                    self.fresh[e] = false;
                }
            }
        }
        let mut peek = self.hidden.clone();
        seg.bootstrap = policy.act(params, &self.obs, &mut peek)?.into_iter().map(|(_, v)| v).collect();
        Ok(seg)
    }
}
