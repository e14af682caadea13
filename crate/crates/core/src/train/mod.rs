//! Recurrent PPO with generalized advantage estimation, trained by a pool
//! of parallel rollout workers with synchronized gradient averaging.

mod adam;
mod checkpoint;
mod gae;
mod ppo;
mod rollout;
mod trainer;

pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use checkpoint::{checkpoint_file_name, list_checkpoints, Checkpoint, CHECKPOINT_VERSION};
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{
    chunk_count, clipped_surrogate, minibatch_plan, pooled_update, ppo_gradient, ppo_update, synchronized_update,
    BatchPart, GaeConfig, LearnerState, PpoConfig, UpdateStats,
};
pub use rollout::{EpisodeSource, Segment, Worker};
pub use trainer::{TrainConfig, TrainLogRow, TrainSetup, Trainer};
