use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, Adam, AdamConfig};
use super::gae::mean_std;
use super::rollout::Segment;
use crate::error::{Error, Result};
use crate::policy::{ActionDistribution, OutputGrad, Policy, Real, SeqInput, Tape, AUX_DIM};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig { gamma: 0.99, lambda: 0.95 }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParam("gamma and lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    /// Recurrent chunk length for backpropagation through time; must
    /// divide the rollout length.
    pub chunk_len: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            epochs: 2,
            minibatches: 2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 2.5e-4,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-5,
            max_grad_norm: 0.5,
            chunk_len: 32,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) || self.epochs == 0 || self.minibatches == 0 || self.chunk_len == 0 {
            return Err(Error::InvalidParam("clip, epochs, minibatches and chunk_len must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::InvalidParam("bad learning rate, coefficient or norm bound".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_betas[0],
            beta2: self.adam_betas[1],
            eps: self.adam_eps,
        }
    }
}

/// Parameters plus optimizer moments: everything an update mutates.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState<T> {
    pub params: Vec<T>,
    pub adam: Adam<T>,
}

impl<T: Real> LearnerState<T> {
    pub fn new(params: Vec<T>) -> Self {
        let adam = Adam::new(params.len());
        LearnerState { params, adam }
    }
}

/// Means over all minibatch steps of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

impl UpdateStats {
    fn add(&mut self, o: &UpdateStats) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.clip_fraction += o.clip_fraction;
        self.approx_kl += o.approx_kl;
        self.grad_norm += o.grad_norm;
    }

    fn scale(&mut self, s: f64) {
        self.policy_loss *= s;
        self.value_loss *= s;
        self.entropy *= s;
        self.clip_fraction *= s;
        self.approx_kl *= s;
        self.grad_norm *= s;
    }
}

/// One segment's share of a minibatch: chunk ids plus its normalized
/// advantages and returns.
#[derive(Clone, Copy, Debug)]
pub struct BatchPart<'a, T> {
    pub segment: &'a Segment<T>,
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
    pub chunks: &'a [usize],
}

/// Clipped surrogate for one sample: `(loss, d loss / d log π)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (-unclipped, -unclipped)
    } else {
        (-clipped, 0.0)
    }
}

/// Number of recurrent chunks per segment.
pub fn chunk_count(n_env: usize, len: usize, chunk_len: usize) -> usize {
    n_env * (len / chunk_len)
}

/// Chunk ids for every minibatch of one epoch, shared by all workers.
pub fn minibatch_plan(seed: u64, update: u64, epoch: usize, epochs: usize, n_chunks: usize, minibatches: usize) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..n_chunks).collect();
    ids.shuffle(&mut rng::stream(seed, "minibatch", update * epochs as u64 + epoch as u64));
    let per = n_chunks / minibatches;
    let extra = n_chunks % minibatches;
    let mut out = Vec::with_capacity(minibatches);
    let mut at = 0;
    for m in 0..minibatches {
        let n = per + usize::from(m < extra);
        out.push(ids[at..at + n].to_vec());
        at += n;
    }
    out
}

/// PPO loss gradient over the chunks of `parts`, as a mean over all
/// samples. Returns the gradient and this batch's loss statistics.
pub fn ppo_gradient<T: Real>(policy: &Policy, params: &[T], parts: &[BatchPart<'_, T>], cfg: &PpoConfig) -> Result<(Vec<T>, UpdateStats)> {
    let cl = cfg.chunk_len;
    let n_seq: usize = parts.iter().map(|p| p.chunks.len()).sum();
    let m = n_seq * cl;
    if m == 0 {
        return Err(Error::InvalidParam("empty minibatch".into()));
    }
    let il = policy.image_len();
    let sl = policy.state_len(1);
    let (layers, hs) = (policy.config().layers, policy.config().hidden);

    // (part, env, first step) of every sequence, then gather time-major.
    let mut seqs = Vec::with_capacity(n_seq);
    for (pi, p) in parts.iter().enumerate() {
        let seg = p.segment;
        if seg.len % cl != 0 || seg.image_len != il {
            return Err(Error::DimMismatch("segment does not match chunk length or policy input".into()));
        }
        let per_env = seg.len / cl;
        for &c in p.chunks {
            if c >= seg.n_env * per_env {
                return Err(Error::InvalidParam(format!("chunk {c} out of range")));
            }
            seqs.push((pi, c / per_env, (c % per_env) * cl));
        }
    }
    let mut images = Vec::with_capacity(m * il);
    let mut aux = Vec::with_capacity(m * AUX_DIM);
    let mut starts = Vec::with_capacity(m);
    let mut src = Vec::with_capacity(m);
    for t in 0..cl {
        for &(pi, e, t0) in &seqs {
            let seg = parts[pi].segment;
            let i = (t0 + t) * seg.n_env + e;
            images.extend_from_slice(&seg.images[i * il..(i + 1) * il]);
            aux.extend_from_slice(&seg.aux[i * AUX_DIM..(i + 1) * AUX_DIM]);
            starts.push(seg.starts[i]);
            src.push((pi, i));
        }
    }
    let mut h0 = vec![T::zero(); layers * n_seq * hs];
    let mut c0 = vec![T::zero(); layers * n_seq * hs];
    for (s, &(pi, e, t0)) in seqs.iter().enumerate() {
        let seg = parts[pi].segment;
        let i = t0 * seg.n_env + e;
        for l in 0..layers {
            let from = i * sl + l * hs..i * sl + (l + 1) * hs;
            let to = (l * n_seq + s) * hs..(l * n_seq + s + 1) * hs;
            h0[to.clone()].copy_from_slice(&seg.h[from.clone()]);
            c0[to].copy_from_slice(&seg.c[from]);
        }
    }

    let mut tape = Tape::default();
    let out = policy.forward_sequences(
        params,
        &SeqInput {
            n_seq,
            len: cl,
            images: &images,
            aux: &aux,
            starts: &starts,
            h0: &h0,
            c0: &c0,
        },
        Some(&mut tape),
    )?;

    let inv = 1.0 / m as f64;
    let log_std = [out.log_std[0].as_f64(), out.log_std[1].as_f64()];
    let mut d_mean = vec![T::zero(); 2 * m];
    let mut d_value = vec![T::zero(); m];
    let mut d_log_std = [0.0f64; 2];
    let mut stats = UpdateStats::default();
    for (k, &(pi, i)) in src.iter().enumerate() {
        let p = &parts[pi];
        let dist = ActionDistribution {
            mean: [out.mean[2 * k].as_f64(), out.mean[2 * k + 1].as_f64()],
            log_std,
        };
        let raw = p.segment.actions[i];
        let log_ratio = dist.log_prob(raw) - p.segment.log_probs[i];
        let ratio = log_ratio.exp();
        let adv = p.advantages[i];
        let (loss, d_logp) = clipped_surrogate(ratio, adv, cfg.clip);
        stats.policy_loss += loss * inv;
        stats.clip_fraction += f64::from(u8::from((ratio - 1.0).abs() > cfg.clip)) * inv;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) * inv;
        let (gm, gs) = dist.log_prob_grad(raw);
        for j in 0..2 {
            d_mean[2 * k + j] = T::cast(d_logp * gm[j] * inv);
            d_log_std[j] += d_logp * gs[j] * inv;
        }
        let err = out.value[k].as_f64() - p.returns[i];
        stats.value_loss += 0.5 * err * err * inv;
        d_value[k] = T::cast(cfg.value_coef * err * inv);
    }
    stats.entropy = ActionDistribution { mean: [0.0; 2], log_std }.entropy();
    for g in &mut d_log_std {
        *g -= cfg.entropy_coef;
    }
    let total = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut grad = vec![T::zero(); policy.num_params()];
    policy.backward(
        params,
        &tape,
        &OutputGrad {
            d_mean: &d_mean,
            d_log_std: [T::cast(d_log_std[0]), T::cast(d_log_std[1])],
            d_value: &d_value,
        },
        &mut grad,
    )?;
    Ok((grad, stats))
}

struct Prepared {
    advantages: Vec<Vec<f64>>,
    returns: Vec<Vec<f64>>,
    n_chunks: usize,
}

/// GAE per segment, then advantage normalization over the whole update
/// batch (all workers together).
fn prepare<T: Real>(segments: &[Segment<T>], ppo: &PpoConfig, gae: &GaeConfig) -> Result<Prepared> {
    ppo.validate()?;
    gae.validate()?;
    let first = segments.first().ok_or_else(|| Error::InvalidParam("no segments".into()))?;
    if segments.iter().any(|s| s.n_env != first.n_env || s.len != first.len) {
        return Err(Error::DimMismatch("all workers must collect segments of the same shape".into()));
    }
    if first.len % ppo.chunk_len != 0 {
        return Err(Error::InvalidParam(format!(
            "chunk length {} does not divide rollout length {}",
            ppo.chunk_len, first.len
        )));
    }
    let n_chunks = chunk_count(first.n_env, first.len, ppo.chunk_len);
    if n_chunks < ppo.minibatches {
        return Err(Error::InvalidParam(format!("{n_chunks} chunks cannot form {} minibatches", ppo.minibatches)));
    }
    let (mut advantages, mut returns) = (Vec::new(), Vec::new());
    for s in segments {
        let (a, r) = s.advantages(gae.gamma, gae.lambda);
        advantages.push(a);
        returns.push(r);
    }
    let all: Vec<f64> = advantages.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&all);
    for a in advantages.iter_mut().flatten() {
        *a = (*a - mean) / (std + 1e-8);
    }
    Ok(Prepared {
        advantages,
        returns,
        n_chunks,
    })
}

fn apply_step<T: Real>(state: &mut LearnerState<T>, mut grad: Vec<T>, ppo: &PpoConfig) -> Result<f64> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    let norm = clip_global_norm(&mut grad, ppo.max_grad_norm);
    state.adam.step(&mut state.params, &grad, &ppo.adam());
    Ok(norm)
}

/// Synchronized data-parallel update: for every minibatch each worker
/// computes the gradient on its own segment, the gradients are averaged
/// element-wise in worker order, and one optimizer step is applied to the
/// shared state. Any failure restores the state from before the update.
pub fn synchronized_update<T: Real>(
    policy: &Policy,
    state: &mut LearnerState<T>,
    segments: &[Segment<T>],
    ppo: &PpoConfig,
    gae: &GaeConfig,
    seed: u64,
    update: u64,
) -> Result<UpdateStats> {
    let prep = prepare(segments, ppo, gae)?;
    let backup = state.clone();
    let k = segments.len();
    let mut stats = UpdateStats::default();
    let run = |state: &mut LearnerState<T>, stats: &mut UpdateStats| -> Result<()> {
        for epoch in 0..ppo.epochs {
            for mb in minibatch_plan(seed, update, epoch, ppo.epochs, prep.n_chunks, ppo.minibatches) {
                let params = &state.params;
                let results: Vec<Result<(Vec<T>, UpdateStats)>> = (0..k)
                    .into_par_iter()
                    .map(|w| {
                        let part = BatchPart {
                            segment: &segments[w],
                            advantages: &prep.advantages[w],
                            returns: &prep.returns[w],
                            chunks: &mb,
                        };
                        ppo_gradient(policy, params, &[part], ppo)
                    })
                    .collect();
                let mut sum: Option<Vec<T>> = None;
                let mut mb_stats = UpdateStats::default();
                for (w, r) in results.into_iter().enumerate() {
                    let (g, s) = r.map_err(|e| worker_error(w, e))?;
                    mb_stats.add(&s);
                    match sum.as_mut() {
                        None => sum = Some(g),
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    }
                }
                let mut grad = sum.expect("at least one worker");
                let inv = T::cast(1.0 / k as f64);
                grad.iter_mut().for_each(|g| *g *= inv);
                mb_stats.scale(1.0 / k as f64);
                mb_stats.grad_norm = apply_step(state, grad, ppo)?;
                stats.add(&mb_stats);
            }
        }
        Ok(())
    };
    if let Err(e) = run(state, &mut stats) {
        *state = backup;
        if matches!(e, Error::NonFiniteLoss) {
            log::warn!("update {update}: non-finite loss, keeping previous parameters");
        }
        return Err(e);
    }
    stats.scale(1.0 / (ppo.epochs * ppo.minibatches) as f64);
    Ok(stats)
}

fn worker_error(worker: usize, e: Error) -> Error {
    match e {
        Error::NonFiniteLoss => Error::NonFiniteLoss,
        other => Error::WorkerFailed {
            worker,
            reason: other.to_string(),
        },
    }
}

/// Single-process reference: every minibatch is the concatenation of the
/// matching minibatches of all segments, with one gradient over the pooled
/// samples.
pub fn pooled_update<T: Real>(
    policy: &Policy,
    state: &mut LearnerState<T>,
    segments: &[Segment<T>],
    ppo: &PpoConfig,
    gae: &GaeConfig,
    seed: u64,
    update: u64,
) -> Result<UpdateStats> {
    let prep = prepare(segments, ppo, gae)?;
    let backup = state.clone();
    let mut stats = UpdateStats::default();
    let run = |state: &mut LearnerState<T>, stats: &mut UpdateStats| -> Result<()> {
        for epoch in 0..ppo.epochs {
            for mb in minibatch_plan(seed, update, epoch, ppo.epochs, prep.n_chunks, ppo.minibatches) {
                let parts: Vec<BatchPart<'_, T>> = segments
                    .iter()
                    .enumerate()
                    .map(|(w, s)| BatchPart {
                        segment: s,
                        advantages: &prep.advantages[w],
                        returns: &prep.returns[w],
                        chunks: &mb,
                    })
                    .collect();
                let (grad, mut s) = ppo_gradient(policy, &state.params, &parts, ppo)?;
                s.grad_norm = apply_step(state, grad, ppo)?;
                stats.add(&s);
            }
        }
        Ok(())
    };
    if let Err(e) = run(state, &mut stats) {
        *state = backup;
        return Err(e);
    }
    stats.scale(1.0 / (ppo.epochs * ppo.minibatches) as f64);
    Ok(stats)
}

/// Single-worker PPO update on one segment.
pub fn ppo_update<T: Real>(
    policy: &Policy,
    state: &mut LearnerState<T>,
    segment: &Segment<T>,
    ppo: &PpoConfig,
    gae: &GaeConfig,
    seed: u64,
    update: u64,
) -> Result<UpdateStats> {
    synchronized_update(policy, state, std::slice::from_ref(segment), ppo, gae, seed, update)
}
