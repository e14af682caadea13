//! Independent oracles and statistical checks that complement the
//! acceptance run.

use std::sync::Arc;

use dynanav::augment::{populate_pedestrians, AugmentPipeline, PedestrianParams};
use dynanav::policy::{ActionDistribution, BlockSpec, Policy, PolicyConfig, SeqInput, AUX_DIM};
use dynanav::rng::stream;
use dynanav::scene::{generate_scene, sample_navigable_point, OccupancyGrid, Scene, SceneParams};
use dynanav::tasks::{EnvConfig, TaskKind};
use dynanav::train::{
    minibatch_plan, ppo_gradient, ppo_update, synchronized_update, BatchPart, EpisodeSource, GaeConfig, LearnerState, PpoConfig,
    Segment, Worker,
};

fn small_policy(hidden: usize) -> Policy {
    Policy::new(PolicyConfig {
        input_height: 16,
        input_width: 16,
        stem_channels: 4,
        blocks: vec![BlockSpec { channels: 4, stride: 2 }],
        feature_dim: 8,
        hidden,
        ..Default::default()
    })
    .unwrap()
}

fn segments(policy: &Policy, k: usize, len: usize) -> Vec<Segment<f64>> {
    let scene = Arc::new(generate_scene(4, &SceneParams::empty_room(5.0, 5.0)).unwrap());
    let env = EnvConfig {
        sensor: dynanav::sim::SensorConfig { width: 16, height: 16, ..Default::default() },
        ..Default::default()
    };
    let src = EpisodeSource::new(vec![scene], TaskKind::PointNav, 0, env).unwrap();
    let pipe = AugmentPipeline::default();
    let params: Vec<f64> = policy.init_params(7);
    (0..k)
        .map(|w| Worker::new(w, 2, &src, &pipe, policy, 33, 0).unwrap().collect(policy, &params, len, &src, &pipe).unwrap())
        .collect()
}

#[test]
fn duplicated_workers_match_single_worker() {
    let policy = small_policy(6);
    let seg = segments(&policy, 1, 16).remove(0);
    let ppo = PpoConfig { chunk_len: 4, ..Default::default() };
    let gae = GaeConfig::default();
    let mut one = LearnerState::new(policy.init_params::<f64>(7));
    let mut two = one.clone();
    synchronized_update(&policy, &mut one, std::slice::from_ref(&seg), &ppo, &gae, 1, 0).unwrap();
    synchronized_update(&policy, &mut two, &[seg.clone(), seg], &ppo, &gae, 1, 0).unwrap();
    let diff = one.params.iter().zip(&two.params).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn zero_advantages_only_raise_entropy() {
    // with no advantage signal the policy term vanishes and the entropy
    // bonus alone pushes log-std up: its loss gradient must be negative
    let policy = small_policy(6);
    let segs = segments(&policy, 1, 8);
    let params: Vec<f64> = policy.init_params(7);
    let n = segs[0].num_steps();
    let zeros = vec![0.0; n];
    let returns = segs[0].values.clone();
    let chunks: Vec<usize> = (0..4).collect();
    let ppo = PpoConfig { chunk_len: 4, ..Default::default() };
    let part = BatchPart { segment: &segs[0], advantages: &zeros, returns: &returns, chunks: &chunks };
    let (grad, stats) = ppo_gradient(&policy, &params, &[part], &ppo).unwrap();
    assert_eq!(stats.policy_loss, 0.0);
    let slot = policy.slots().iter().find(|s| s.name == "actor_log_std").unwrap();
    for i in slot.range.clone() {
        assert!(grad[i] < 0.0, "log-std gradient {}", grad[i]);
    }
}

/// One-step continuous bandit: reward peaks at a fixed action, so PPO must
/// move the mean there.
#[test]
fn ppo_solves_a_bandit() {
    let policy = small_policy(8);
    let mut state = LearnerState::new(policy.init_params::<f64>(3));
    let target = [0.3, -0.6];
    let n_env = 64;
    let ppo = PpoConfig { chunk_len: 1, epochs: 4, minibatches: 4, lr: 3e-3, entropy_coef: 0.0, ..Default::default() };
    let gae = GaeConfig::default();
    let il = policy.image_len();
    let images = vec![0.5; n_env * il];
    let aux: Vec<f64> = (0..n_env * AUX_DIM).map(|i| if i % AUX_DIM == 0 { 0.4 } else { 0.0 }).collect();
    let starts = vec![true; n_env];
    let zeros = vec![0.0; policy.state_len(n_env)];
    let mut rng = stream(9, "bandit", 0);
    let err = |m: [f64; 2]| ((m[0] - target[0]).powi(2) + (m[1] - target[1]).powi(2)).sqrt();
    let mut mean = [0.0; 2];
    let mut first_err = None;
    for update in 0..150u64 {
        let out = policy
            .forward_sequences(&state.params, &SeqInput { n_seq: n_env, len: 1, images: &images, aux: &aux, starts: &starts, h0: &zeros, c0: &zeros }, None)
            .unwrap();
        mean = [out.mean[0], out.mean[1]];
        first_err.get_or_insert(err(mean));
        let (mut actions, mut log_probs, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
        for e in 0..n_env {
            let d = ActionDistribution { mean: [out.mean[2 * e], out.mean[2 * e + 1]], log_std: out.log_std };
            let (raw, _) = d.sample(&mut rng);
            actions.push(raw);
            log_probs.push(d.log_prob(raw));
            rewards.push(-((raw[0] - target[0]).powi(2) + (raw[1] - target[1]).powi(2)));
        }
        let sl = policy.state_len(1);
        let seg = Segment {
            n_env,
            len: 1,
            image_len: il,
            images: images.clone(),
            aux: aux.clone(),
            starts: starts.clone(),
            actions,
            log_probs,
            values: out.value.clone(),
            rewards,
            dones: vec![true; n_env],
            h: vec![0.0; n_env * sl],
            c: vec![0.0; n_env * sl],
            bootstrap: vec![0.0; n_env],
            finished: Vec::new(),
        };
        ppo_update(&policy, &mut state, &seg, &ppo, &gae, 2, update).unwrap();
    }
    let (e0, e1) = (first_err.unwrap(), err(mean));
    assert!(e1 < 0.1 && e1 < e0 / 3.0, "mean {mean:?}: error {e0:.3} -> {e1:.3}");
}

/// Kolmogorov-Smirnov distance to `U[lo, hi]`.
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn pedestrian_speeds_are_uniform() {
    let scene = generate_scene(12, &SceneParams::default()).unwrap();
    let params = PedestrianParams::default();
    let mut rng = stream(12, "speeds", 0);
    let peds = populate_pedestrians(&scene, 1500, &mut rng, &params).unwrap();
    let speeds: Vec<f64> = peds.iter().map(|p| p.speed()).collect();
    let d = ks_uniform(speeds, 0.45, 0.5);
    // critical value at alpha = 0.001
    assert!(d < 1.95 / (1500f64).sqrt(), "KS distance {d}");
}

#[test]
fn navigable_points_are_uniform() {
    // 3 x 3 m interior split into 9 equal cells
    let scene = Scene::new("room", OccupancyGrid::empty_room(0.1, 32, 32).unwrap(), 0);
    let mut rng = stream(13, "points", 0);
    let n = 9000;
    let mut counts = [0usize; 9];
    for _ in 0..n {
        let p = sample_navigable_point(&scene, &mut rng, 0.0).unwrap();
        let bx = (((p.x - 0.1) / 1.0).floor() as usize).min(2);
        let by = (((p.y - 0.1) / 1.0).floor() as usize).min(2);
        counts[by * 3 + bx] += 1;
    }
    let expected = n as f64 / 9.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 8 degrees of freedom, alpha = 0.001
    assert!(chi2 < 26.12, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn minibatch_membership_is_uniform() {
    let (chunks, mbs, trials) = (8, 2, 4000);
    let mut first = [0usize; 8];
    for u in 0..trials {
        first[minibatch_plan(5, u, 0, 1, chunks, mbs)[0][0]] += 1;
    }
    let expected = trials as f64 / chunks as f64;
    let chi2: f64 = first.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 7 degrees of freedom, alpha = 0.001
    assert!(chi2 < 24.32, "chi-square {chi2}");
}
