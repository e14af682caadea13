//! Collects rollouts on four workers and checks that the synchronized
//! gradient-averaging update matches one update on the pooled batch.
//!
//! `cargo run --release --example distributed_update`

use std::sync::Arc;

use dynanav::augment::AugmentPipeline;
use dynanav::policy::{BlockSpec, Policy, PolicyConfig};
use dynanav::scene::{generate_scene, SceneParams};
use dynanav::sim::SensorConfig;
use dynanav::tasks::{EnvConfig, TaskKind};
use dynanav::train::{pooled_update, synchronized_update, EpisodeSource, GaeConfig, LearnerState, PpoConfig, Worker};

fn main() -> dynanav::Result<()> {
    let scene = Arc::new(generate_scene(1, &SceneParams::default())?);
    let env = EnvConfig { sensor: SensorConfig { width: 32, height: 32, ..Default::default() }, ..Default::default() };
    let policy = Policy::new(PolicyConfig {
        input_height: 32,
        input_width: 32,
        blocks: vec![BlockSpec { channels: 8, stride: 2 }],
        feature_dim: 32,
        hidden: 32,
        ..Default::default()
    })?;
    let src = EpisodeSource::new(vec![scene], TaskKind::PointNav, 3, env)?;
    let pipe = AugmentPipeline::default();
    let params: Vec<f64> = policy.init_params(0);
    let segments = (0..4)
        .map(|w| Worker::new(w, 2, &src, &pipe, &policy, 7, 0)?.collect(&policy, &params, 32, &src, &pipe))
        .collect::<dynanav::Result<Vec<_>>>()?;
    let ppo = PpoConfig { chunk_len: 8, ..Default::default() };
    let gae = GaeConfig::default();
    let mut a = LearnerState::new(params.clone());
    let mut b = LearnerState::new(params);
    let sa = synchronized_update(&policy, &mut a, &segments, &ppo, &gae, 7, 0)?;
    let sb = pooled_update(&policy, &mut b, &segments, &ppo, &gae, 7, 0)?;
    let diff = a.params.iter().zip(&b.params).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("{} parameters, {} samples", policy.num_params(), segments.iter().map(|s| s.num_steps()).sum::<usize>());
    println!("synchronized: policy loss {:.5}, value loss {:.5}", sa.policy_loss, sa.value_loss);
    println!("pooled:       policy loss {:.5}, value loss {:.5}", sb.policy_loss, sb.value_loss);
    println!("max parameter difference {diff:.2e}");
    Ok(())
}
