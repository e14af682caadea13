//! Trains a point-goal policy in one empty room and tracks the
//! deterministic success rate on held-out episodes.
//!
//! `cargo run --release --example train_pointnav -- [total_steps] [out_dir]`

use std::collections::HashMap;
use std::sync::Arc;

use dynanav::eval::{aggregate, run_eval, EvalSetup};
use dynanav::rng;
use dynanav::scene::{generate_scene, SceneParams};
use dynanav::tasks::{make_episode, EnvConfig, EpisodeRecord, TaskKind};
use dynanav::train::{TrainConfig, TrainSetup, Trainer};
use dynanav::augment::AugmentPipeline;

fn main() -> dynanav::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let total_steps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300_000);
    let out = args.get(2).map(std::path::PathBuf::from);
    let seed = 1;

    let scene = Arc::new(generate_scene(seed, &SceneParams::empty_room(6.0, 6.0))?);
    let env = EnvConfig::default();
    let mut r = rng::stream(seed, "eval-episodes", 0);
    let episodes: Vec<EpisodeRecord> = (0..50)
        .map(|_| make_episode(&scene, &mut r, TaskKind::PointNav, 0, &env.task).map(|e| EpisodeRecord::from(&e)))
        .collect::<dynanav::Result<_>>()?;
    let scenes = HashMap::from([(scene.id().to_string(), Arc::clone(&scene))]);

    let setup = TrainSetup {
        policy: Default::default(),
        env: env.clone(),
        task: TaskKind::PointNav,
        augment: AugmentPipeline::default(),
        train: TrainConfig {
            total_steps,
            ..Default::default()
        },
        seed,
    };
    let eval = EvalSetup::new(env, AugmentPipeline::default(), TaskKind::PointNav);
    let mut trainer = Trainer::new(setup, vec![scene])?;
    println!("policy parameters: {}", trainer.policy().num_params());
    let mut best = 0.0;
    trainer.run(out.as_deref(), |t, row| {
        if row.update % 10 != 0 {
            return true;
        }
        let records = run_eval(t.policy(), t.params(), &scenes, &episodes, &eval).expect("eval");
        let agg = aggregate(&records);
        println!(
            "step {:>9}  train success ema {:.3}  eval success {:.3}  spl {:.3}",
            row.step, row.success_ema, agg.success, agg.spl
        );
        best = f64::max(best, agg.success);
        agg.success <= 0.9
    })?;
    println!("best eval success {best:.3} after {} steps", trainer.step());
    Ok(())
}
