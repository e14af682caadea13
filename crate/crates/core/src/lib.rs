//! Desk-scale indoor navigation: procedural scenes, a 2.5D kinematic
//! simulator with depth rendering, navigation tasks, observation and
//! dynamic-pedestrian augmentation, and a recurrent actor-critic trained
//! with decentralized synchronous PPO.

pub mod augment;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod policy;
pub mod rng;
pub mod scene;
pub mod sim;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
