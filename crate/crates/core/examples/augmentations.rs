//! Applies each augmentation pipeline to one rendered frame.
//!
//! `cargo run --release --example augmentations`

use dynanav::augment::{apply_pipeline, AugmentMode, AugmentPipeline};
use dynanav::rng::stream;
use dynanav::scene::{generate_scene, SceneParams};
use dynanav::tasks::{make_episode, EnvConfig, NavEnv, TaskKind};
use std::sync::Arc;

fn main() -> dynanav::Result<()> {
    let env = EnvConfig::default();
    let scene = Arc::new(generate_scene(2, &SceneParams::default())?);
    let mut rng = stream(2, "example-aug", 0);
    let spec = make_episode(&scene, &mut rng, TaskKind::PointNav, 0, &env.task)?;
    let (_, obs) = NavEnv::reset(scene, spec, &env)?;
    for label in ["none", "crop", "cutout", "crop+cutout", "dynamic+crop"] {
        let pipe = AugmentPipeline::parse(label, 6)?;
        for mode in [AugmentMode::Train, AugmentMode::Eval] {
            let o = apply_pipeline(&obs, &pipe, &mut rng, mode)?;
            let zeros = o.depth.values().iter().filter(|&&v| v == 0.0).count();
            println!(
                "{label:>13} {mode:?}: {}x{}, {zeros} zeroed pixels, {} training pedestrians",
                o.depth.width(),
                o.depth.height(),
                pipe.train_ped_count
            );
        }
    }
    Ok(())
}
