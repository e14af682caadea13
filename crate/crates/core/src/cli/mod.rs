//! Run configuration and the command implementations behind the binary:
//! scene generation, training, evaluation, throughput benchmark and
//! sensor-transfer evaluation.

mod commands;
mod config;

pub use commands::{
    cmd_bench, cmd_eval, cmd_gen_scenes, cmd_train, cmd_transfer_eval, cmd_transfer_sweep, load_scenes, scene_map,
    BenchReport, FlavorDelta, SceneManifest, SceneSubset, TrainReport, TransferReport, MANIFEST_FILE,
};
pub use config::{BenchConfig, EvalConfig, Overrides, RunConfig, ScenesConfig, TransferConfig};
