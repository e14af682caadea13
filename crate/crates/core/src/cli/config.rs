use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPipeline;
use crate::error::{Error, Result};
use crate::eval::EvalProtocol;
use crate::policy::{Policy, PolicyConfig};
use crate::scene::SceneParams;
use crate::sim::SensorFlavor;
use crate::tasks::{EnvConfig, TaskKind};
use crate::train::{TrainConfig, TrainSetup};

/// Scene generation and dataset split sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    /// Where scene files, `splits.json` and episode manifests live.
    pub dir: PathBuf,
    /// Training scenes generated.
    pub count: usize,
    /// Nested training subsets written to the manifest; each is a prefix of
    /// the next.
    pub subsets: Vec<usize>,
    /// Training scenes used by `train` (0 = all).
    pub train_scenes: usize,
    /// Held-out scenes for the val1/val2 episode splits.
    pub eval_count: usize,
    pub train_episodes: usize,
    pub val1_episodes: usize,
    pub val2_episodes: usize,
    pub params: SceneParams,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        ScenesConfig {
            dir: PathBuf::from("scenes"),
            count: 8,
            subsets: vec![1, 2, 4, 8],
            train_scenes: 0,
            eval_count: 4,
            train_episodes: 100,
            val1_episodes: 50,
            val2_episodes: 100,
            params: SceneParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub protocol: EvalProtocol,
    /// Episodes stepped together per batched policy call.
    pub batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: EvalProtocol::default(),
            batch: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed steps per worker.
    pub steps: usize,
    pub warmup_steps: usize,
    /// Worker count of the parallel measurement.
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            steps: 20_000,
            warmup_steps: 1_000,
            workers: 8,
        }
    }
}

/// The augmentation comparison: one training run per entry, each
/// evaluated under both sensor flavors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub sweep: Vec<String>,
    /// Pedestrians added by the `dynamic` token.
    pub dynamic_peds: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            sweep: ["none", "dynamic", "crop", "cutout", "crop+cutout", "dynamic+crop", "dynamic+cutout"]
                .map(String::from)
                .to_vec(),
            dynamic_peds: 6,
        }
    }
}

/// Every tunable of a run in one file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub task: TaskKind,
    pub scenes: ScenesConfig,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub augment: AugmentPipeline,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub transfer: TransferConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "run".into(),
            out_dir: PathBuf::from("runs/run"),
            seed: 0,
            task: TaskKind::PointNav,
            scenes: ScenesConfig::default(),
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            augment: AugmentPipeline::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            transfer: TransferConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub task: Option<TaskKind>,
    pub peds: Option<usize>,
    pub aug: Option<String>,
    pub workers: Option<usize>,
    pub flavor: Option<SensorFlavor>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the effective config (all defaults resolved).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// `--aug` replaces the image ops and sets the pedestrian count from
    /// `dynamic` (or clears it); `--peds` then overrides the count.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(t) = o.task {
            self.task = t;
        }
        if let Some(aug) = &o.aug {
            let p = AugmentPipeline::parse(aug, self.transfer.dynamic_peds)?;
            self.augment.ops = p.ops;
            self.augment.train_ped_count = p.train_ped_count;
        }
        if let Some(n) = o.peds {
            self.augment.train_ped_count = n;
        }
        if let Some(k) = o.workers {
            self.train.workers = k;
            self.bench.workers = k;
        }
        if let Some(f) = o.flavor {
            self.env.sensor.flavor = f;
        }
        Ok(())
    }

    /// Checks every section; runs before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::Config("run_id must not be empty".into()));
        }
        self.scenes.params.validate()?;
        if self.scenes.count == 0 || self.scenes.eval_count == 0 {
            return Err(Error::Config("scene counts must be positive".into()));
        }
        if self.scenes.train_scenes > self.scenes.count {
            return Err(Error::Config(format!(
                "train_scenes {} exceeds generated count {}",
                self.scenes.train_scenes, self.scenes.count
            )));
        }
        if self.scenes.subsets.iter().any(|&n| n == 0 || n > self.scenes.count) || !self.scenes.subsets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("subsets must be increasing and within the scene count".into()));
        }
        self.env.validate()?;
        self.train.validate()?;
        self.eval.protocol.validate()?;
        if self.eval.batch == 0 || self.bench.workers == 0 || self.bench.steps == 0 {
            return Err(Error::Config("eval batch, bench workers and bench steps must be positive".into()));
        }
        for label in &self.transfer.sweep {
            AugmentPipeline::parse(label, self.transfer.dynamic_peds)?;
        }
        let (h, w) = self.augment.output_dims(self.env.sensor.height, self.env.sensor.width);
        if self.augment.ops.contains(&crate::augment::AugmentOp::Crop)
            && (self.env.sensor.height < crate::augment::MIN_CROP_INPUT || self.env.sensor.width < crate::augment::MIN_CROP_INPUT)
        {
            return Err(Error::Config("sensor too small to crop".into()));
        }
        Policy::new(PolicyConfig {
            input_height: h,
            input_width: w,
            ..self.policy.clone()
        })?;
        Ok(())
    }

    pub fn train_setup(&self) -> TrainSetup {
        TrainSetup {
            policy: self.policy.clone(),
            env: self.env.clone(),
            task: self.task,
            augment: self.augment.clone(),
            train: self.train.clone(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[train.ppo]\nclipp = 0.1").is_err());
        let cfg = RunConfig::from_toml("seed = 4\n[train.ppo]\nclip = 0.1\n[env.reward]\nw3 = 5.0").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.ppo.clip, 0.1);
        assert_eq!(cfg.env.reward.w3, 5.0);
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            aug: Some("dynamic+crop".into()),
            workers: Some(3),
            flavor: Some(SensorFlavor::SyntheticClean),
            task: Some(TaskKind::SocialNav),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.augment.train_ped_count, 6);
        assert_eq!(cfg.augment.label(), "dynamic+crop");
        assert_eq!((cfg.train.workers, cfg.bench.workers), (3, 3));
        cfg.apply(&Overrides {
            peds: Some(12),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.augment.train_ped_count, 12);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_caught_before_compute() {
        let mut cfg = RunConfig::default();
        cfg.train.ppo.clip = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.scenes.count = 0;
        assert!(cfg.validate().is_err());
    }
}
