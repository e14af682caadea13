//! Evaluates a freshly initialized policy on each task and prints the
//! aggregate metrics. Its mean action is close to zero, which the
//! environment reads as a stop, so success starts at zero.
//!
//! `cargo run --release --example evaluate`

use std::collections::HashMap;
use std::sync::Arc;

use dynanav::augment::AugmentPipeline;
use dynanav::eval::{aggregate, run_eval, EvalSetup, EFFORT_METRIC_LABEL};
use dynanav::policy::Policy;
use dynanav::rng::stream;
use dynanav::scene::{generate_scene, SceneParams};
use dynanav::tasks::{make_episode, EnvConfig, EpisodeRecord, TaskKind};

fn main() -> dynanav::Result<()> {
    let env = EnvConfig::default();
    let scene = Arc::new(generate_scene(8, &SceneParams::default())?);
    let mut rng = stream(8, "example-eval", 0);
    let episodes: Vec<EpisodeRecord> = (0..32)
        .map(|_| make_episode(&scene, &mut rng, TaskKind::PointNav, 0, &env.task).map(|e| EpisodeRecord::from(&e)))
        .collect::<dynanav::Result<_>>()?;
    let scenes = HashMap::from([(scene.id().to_string(), scene)]);
    let policy = Policy::new(Default::default())?;
    let params: Vec<f32> = policy.init_params(0);
    println!("effort efficiency: {EFFORT_METRIC_LABEL}");
    for task in TaskKind::ALL {
        let setup = EvalSetup::new(env.clone(), AugmentPipeline::default(), task);
        let a = aggregate(&run_eval(&policy, &params, &scenes, &episodes, &setup)?);
        println!(
            "{:>14}: success {:.3} spl {:.3} effort {:.3} ins {:.3} steps {:.1}",
            task.name(),
            a.success,
            a.spl,
            a.effort_efficiency,
            a.ins,
            a.steps
        );
    }
    Ok(())
}
