use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{aggregate, run_eval, select_checkpoint, write_records_csv, Aggregate, EvalSetup, EvalSummary, SeedResult};
use crate::policy::Policy;
use crate::rng;
use crate::scene::{generate_scene, load_scene, save_scene, Scene};
use crate::sim::{Action, SensorFlavor, MAX_ANGULAR_SPEED, MAX_LINEAR_SPEED};
use crate::tasks::{make_episode, read_episodes, write_episodes, EpisodeRecord, EpisodeSpec, NavEnv, TaskKind};
use crate::train::{list_checkpoints, Checkpoint, Trainer};

pub const MANIFEST_FILE: &str = "splits.json";

/// One nested training subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSubset {
    pub size: usize,
    pub scenes: Vec<String>,
}

/// Scene split manifest written by `gen-scenes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    /// Training scenes in generation order; every subset is a prefix.
    pub train_scenes: Vec<String>,
    pub subsets: Vec<SceneSubset>,
    pub eval_scenes: Vec<String>,
    pub train_episodes: String,
    pub val1_episodes: String,
    pub val2_episodes: String,
}

impl SceneManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::NotFound(path));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// The first `n` training scenes (all when `n` is 0).
    pub fn training_set(&self, n: usize) -> Result<&[String]> {
        let n = if n == 0 { self.train_scenes.len() } else { n };
        self.train_scenes
            .get(..n)
            .ok_or_else(|| Error::Config(format!("{n} training scenes requested, {} available", self.train_scenes.len())))
    }
}

fn scene_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.txt"))
}

pub fn load_scenes(dir: impl AsRef<Path>, ids: &[String]) -> Result<Vec<Arc<Scene>>> {
    ids.iter().map(|id| load_scene(scene_path(dir.as_ref(), id)).map(Arc::new)).collect()
}

pub fn scene_map(scenes: &[Arc<Scene>]) -> HashMap<String, Arc<Scene>> {
    scenes.iter().map(|s| (s.id().to_string(), Arc::clone(s))).collect()
}

fn make_records(scenes: &[Arc<Scene>], n: usize, cfg: &RunConfig, stream: &str, task: TaskKind, peds: usize) -> Result<Vec<EpisodeRecord>> {
    let mut r = rng::stream(cfg.seed, stream, 0);
    (0..n)
        .map(|i| make_episode(&scenes[i % scenes.len()], &mut r, task, peds, &cfg.env.task).map(|e| EpisodeRecord::from(&e)))
        .collect()
}

/// Generates training and held-out scenes, the nested training subsets
/// and the train/val1/val2 episode manifests into `cfg.scenes.dir`.
pub fn cmd_gen_scenes(cfg: &RunConfig) -> Result<SceneManifest> {
    cfg.validate()?;
    let sc = &cfg.scenes;
    let gen = |name: &'static str, n: usize| -> Result<Vec<Arc<Scene>>> {
        (0..n)
            .into_par_iter()
            .map(|i| generate_scene(rng::sub_seed(cfg.seed, name, i as u64), &sc.params).map(Arc::new))
            .collect()
    };
    let train = gen("train-scene", sc.count)?;
    let held_out = gen("eval-scene", sc.eval_count)?;
    let mut ids: Vec<&str> = train.iter().chain(&held_out).map(|s| s.id()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::GenerationFailed {
            attempts: 1,
            reason: "scene id collision".into(),
        });
    }
    std::fs::create_dir_all(&sc.dir)?;
    for s in train.iter().chain(&held_out) {
        save_scene(s, scene_path(&sc.dir, s.id()))?;
    }
    let eval_peds = cfg.task.eval_ped_count();
    write_episodes(
        sc.dir.join("train.jsonl"),
        &make_records(&train, sc.train_episodes, cfg, "train-episodes", cfg.task, cfg.augment.train_ped_count)?,
    )?;
    write_episodes(sc.dir.join("val1.jsonl"), &make_records(&held_out, sc.val1_episodes, cfg, "val1-episodes", cfg.task, eval_peds)?)?;
    write_episodes(sc.dir.join("val2.jsonl"), &make_records(&held_out, sc.val2_episodes, cfg, "val2-episodes", cfg.task, eval_peds)?)?;
    let train_ids: Vec<String> = train.iter().map(|s| s.id().to_string()).collect();
    let manifest = SceneManifest {
        seed: cfg.seed,
        subsets: sc
            .subsets
            .iter()
            .map(|&n| SceneSubset {
                size: n,
                scenes: train_ids[..n].to_vec(),
            })
            .collect(),
        train_scenes: train_ids,
        eval_scenes: held_out.iter().map(|s| s.id().to_string()).collect(),
        train_episodes: "train.jsonl".into(),
        val1_episodes: "val1.jsonl".into(),
        val2_episodes: "val2.jsonl".into(),
    };
    std::fs::write(sc.dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub steps: u64,
    pub updates: u64,
    pub success_ema: f64,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains into `cfg.out_dir`, resuming from its latest checkpoint if any.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let manifest = SceneManifest::load(&cfg.scenes.dir)?;
    let scenes = load_scenes(&cfg.scenes.dir, manifest.training_set(cfg.scenes.train_scenes)?)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    cfg.save(out.join("config.toml"))?;
    let ckpt_dir = out.join("checkpoints");
    let latest = if ckpt_dir.is_dir() { list_checkpoints(&ckpt_dir)?.pop() } else { None };
    let mut trainer = match latest {
        Some((step, path)) => {
            log::info!("resuming from step {step}");
            Trainer::resume(cfg.train_setup(), scenes, path)?
        }
        None => Trainer::new(cfg.train_setup(), scenes)?,
    };
    if trainer.step() < cfg.train.total_steps {
        trainer.run(Some(out), |_, _| true)?;
    }
    Ok(TrainReport {
        run_dir: out.clone(),
        steps: trainer.step(),
        updates: trainer.updates(),
        success_ema: trainer.success_ema(),
        checkpoints: list_checkpoints(&ckpt_dir)?.into_iter().map(|(_, p)| p).collect(),
    })
}

struct EvalData {
    policy: Policy,
    scenes: HashMap<String, Arc<Scene>>,
    val1: Vec<EpisodeRecord>,
    val2: Vec<EpisodeRecord>,
}

fn eval_data(cfg: &RunConfig) -> Result<EvalData> {
    let manifest = SceneManifest::load(&cfg.scenes.dir)?;
    let scenes = scene_map(&load_scenes(&cfg.scenes.dir, &manifest.eval_scenes)?);
    Ok(EvalData {
        policy: Policy::new(cfg.train_setup().effective_policy())?,
        scenes,
        val1: read_episodes(cfg.scenes.dir.join(&manifest.val1_episodes))?,
        val2: read_episodes(cfg.scenes.dir.join(&manifest.val2_episodes))?,
    })
}

fn eval_setup(cfg: &RunConfig) -> EvalSetup {
    EvalSetup {
        batch: cfg.eval.batch,
        ..EvalSetup::new(cfg.env.clone(), cfg.augment.clone(), cfg.task)
    }
}

/// Run directories under `target`: its `seed-*` children if present,
/// otherwise `target` itself.
fn seed_runs(target: &Path) -> Result<Vec<PathBuf>> {
    let mut runs: Vec<PathBuf> = std::fs::read_dir(target)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-")))
        .collect();
    runs.sort();
    if runs.is_empty() {
        runs.push(target.to_path_buf());
    }
    Ok(runs)
}

fn run_seed(run: &Path, fallback: u64) -> u64 {
    RunConfig::load(run.join("config.toml")).map(|c| c.seed).unwrap_or(fallback)
}

/// Evaluates a checkpoint file directly, or applies the protocol to a run
/// directory (or a directory of `seed-*` runs): select on val1, report on
/// val2. Writes per-episode CSVs and a JSON summary under
/// `<out_dir>/eval`.
pub fn cmd_eval(cfg: &RunConfig, target: Option<&Path>) -> Result<EvalSummary> {
    cfg.validate()?;
    let target = target.unwrap_or(&cfg.out_dir);
    if !target.exists() {
        return Err(Error::NotFound(target.to_path_buf()));
    }
    let data = eval_data(cfg)?;
    let setup = eval_setup(cfg);
    let out_dir = cfg.out_dir.join("eval");
    std::fs::create_dir_all(&out_dir)?;
    let prefix = format!("{}-{}-{}", cfg.task.name(), cfg.env.sensor.flavor.name(), cfg.augment.label());

    let mut per_seed = Vec::new();
    let runs: Vec<(u64, Option<PathBuf>, PathBuf)> = if target.is_file() {
        vec![(cfg.seed, None, target.to_path_buf())]
    } else {
        seed_runs(target)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| (run_seed(&r, i as u64), Some(r.join("checkpoints")), r))
            .collect()
    };
    if runs.len() != cfg.eval.protocol.seeds && !target.is_file() {
        log::warn!("protocol expects {} seeds, found {} runs", cfg.eval.protocol.seeds, runs.len());
    }
    for (seed, ckpt_dir, path) in runs {
        let (ck_path, selection_success) = match ckpt_dir {
            Some(dir) => {
                let sel = select_checkpoint(&data.policy, dir, &data.scenes, &data.val1, &setup)?;
                (sel.path, sel.selection_success)
            }
            None => (path, f64::NAN),
        };
        let ck = Checkpoint::load(&ck_path, Some(data.policy.config().hash()))?;
        let records = run_eval(&data.policy, &ck.state.params, &data.scenes, &data.val2, &setup)?;
        write_records_csv(out_dir.join(format!("{prefix}-seed{seed}.csv")), &records)?;
        per_seed.push(SeedResult {
            seed,
            checkpoint_step: ck.step,
            selection_success,
            aggregate: aggregate(&records),
        });
    }
    let summary = EvalSummary::new(&cfg.augment.label(), cfg.task.name(), cfg.env.sensor.flavor.name(), per_seed);
    summary.write_json(out_dir.join(format!("{prefix}-summary.json")))?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub flavor: String,
    pub pedestrians: usize,
    pub steps_per_worker: usize,
    pub host_threads: usize,
    /// Environment step plus render only (resets excluded).
    pub single_worker_steps_per_sec: f64,
    /// Including episode resets.
    pub single_worker_wall_steps_per_sec: f64,
    pub workers: usize,
    pub per_worker_steps_per_sec: Vec<f64>,
    pub aggregate_steps_per_sec: f64,
    pub aggregate_wall_steps_per_sec: f64,
    /// Aggregate over `workers ×` single-worker rate.
    pub scaling_efficiency: f64,
}

struct BenchRun {
    steps: usize,
    step_secs: f64,
    wall_secs: f64,
}

/// Steps random uniform actions, resetting through the episode pool.
/// Only `step()` calls count towards `step_secs`.
fn bench_worker(scene: &Arc<Scene>, episodes: &[EpisodeSpec], cfg: &RunConfig, id: usize, steps: usize) -> Result<BenchRun> {
    let mut r = rng::stream(cfg.seed, "bench-actions", id as u64);
    let mut next = id % episodes.len();
    let start = Instant::now();
    let (mut env, _) = NavEnv::reset(Arc::clone(scene), episodes[next].clone(), &cfg.env)?;
    let mut step_secs = 0.0;
    for _ in 0..steps {
        let action = Action::new(
            r.gen_range(-MAX_LINEAR_SPEED..=MAX_LINEAR_SPEED),
            r.gen_range(-MAX_ANGULAR_SPEED..=MAX_ANGULAR_SPEED),
        );
        let t = Instant::now();
        let out = env.step(action)?;
        step_secs += t.elapsed().as_secs_f64();
        if out.done {
            next = (next + 1) % episodes.len();
            env = NavEnv::reset(Arc::clone(scene), episodes[next].clone(), &cfg.env)?.0;
        }
    }
    Ok(BenchRun {
        steps,
        step_secs,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn timed_bench(scene: &Arc<Scene>, episodes: &[EpisodeSpec], cfg: &RunConfig, id: usize) -> Result<BenchRun> {
    bench_worker(scene, episodes, cfg, id, cfg.bench.warmup_steps)?;
    bench_worker(scene, episodes, cfg, id, cfg.bench.steps)
}

/// Random-action throughput of environment stepping with rendering, for
/// one worker and for `bench.workers` concurrent workers.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let scene = Arc::new(generate_scene(rng::sub_seed(cfg.seed, "bench-scene", 0), &cfg.scenes.params)?);
    let mut r = rng::stream(cfg.seed, "bench-episodes", 0);
    let episodes: Vec<EpisodeSpec> = (0..16)
        .map(|_| make_episode(&scene, &mut r, cfg.task, cfg.augment.train_ped_count, &cfg.env.task))
        .collect::<Result<_>>()?;

    let single = timed_bench(&scene, &episodes, cfg, 0)?;
    let k = cfg.bench.workers;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build()
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let start = Instant::now();
    let runs: Vec<BenchRun> = pool.install(|| (0..k).into_par_iter().map(|id| timed_bench(&scene, &episodes, cfg, id)).collect::<Result<_>>())?;
    let parallel_wall = start.elapsed().as_secs_f64();

    let rate = |r: &BenchRun| r.steps as f64 / r.step_secs;
    let single_rate = rate(&single);
    let per_worker: Vec<f64> = runs.iter().map(rate).collect();
    let aggregate: f64 = runs.iter().map(|r| r.steps as f64).sum::<f64>() / runs.iter().map(|r| r.step_secs).fold(0.0, f64::max);
    let report = BenchReport {
        width: cfg.env.sensor.width,
        height: cfg.env.sensor.height,
        flavor: cfg.env.sensor.flavor.name().into(),
        pedestrians: cfg.augment.train_ped_count,
        steps_per_worker: cfg.bench.steps,
        host_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        single_worker_steps_per_sec: single_rate,
        single_worker_wall_steps_per_sec: single.steps as f64 / single.wall_secs,
        workers: k,
        per_worker_steps_per_sec: per_worker,
        aggregate_steps_per_sec: aggregate,
        aggregate_wall_steps_per_sec: (k * cfg.bench.steps) as f64 / parallel_wall,
        scaling_efficiency: aggregate / (k as f64 * single_rate),
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("bench.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Clean minus scan-like.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlavorDelta {
    pub success: f64,
    pub spl: f64,
    pub effort_efficiency: f64,
    pub ins: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub label: String,
    pub task: String,
    pub checkpoint: PathBuf,
    pub checkpoint_step: u64,
    pub effort_metric: String,
    pub scan: Aggregate,
    pub clean: Aggregate,
    pub delta: FlavorDelta,
}

/// Evaluates one checkpoint on the reporting split under both sensor
/// flavors (same episodes) and reports the difference.
pub fn cmd_transfer_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<TransferReport> {
    cfg.validate()?;
    let data = eval_data(cfg)?;
    let ck = Checkpoint::load(checkpoint, Some(data.policy.config().hash()))?;
    let out_dir = cfg.out_dir.join("transfer");
    std::fs::create_dir_all(&out_dir)?;
    let label = cfg.augment.label();
    let mut results = Vec::new();
    for flavor in [SensorFlavor::ScanLike, SensorFlavor::SyntheticClean] {
        let mut c = cfg.clone();
        c.env.sensor.flavor = flavor;
        let records = run_eval(&data.policy, &ck.state.params, &data.scenes, &data.val2, &eval_setup(&c))?;
        write_records_csv(out_dir.join(format!("{label}-{}.csv", flavor.name())), &records)?;
        results.push(aggregate(&records));
    }
    let (scan, clean) = (results[0], results[1]);
    let report = TransferReport {
        label: label.clone(),
        task: cfg.task.name().into(),
        checkpoint: checkpoint.to_path_buf(),
        checkpoint_step: ck.step,
        effort_metric: crate::eval::EFFORT_METRIC_LABEL.into(),
        scan,
        clean,
        delta: FlavorDelta {
            success: clean.success - scan.success,
            spl: clean.spl - scan.spl,
            effort_efficiency: clean.effort_efficiency - scan.effort_efficiency,
            ins: clean.ins - scan.ins,
        },
    };
    std::fs::write(out_dir.join(format!("{label}.json")), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Trains one scan-flavor run per sweep entry, selects each run's
/// checkpoint on val1 and transfer-evaluates it on val2.
pub fn cmd_transfer_sweep(cfg: &RunConfig) -> Result<Vec<TransferReport>> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for label in &cfg.transfer.sweep {
        let mut c = cfg.clone();
        c.apply(&super::Overrides {
            aug: Some(label.clone()),
            flavor: Some(SensorFlavor::ScanLike),
            out: Some(cfg.out_dir.join("sweep").join(label.replace('+', "_"))),
            ..Default::default()
        })?;
        let run = cmd_train(&c)?;
        let data = eval_data(&c)?;
        let sel = select_checkpoint(&data.policy, run.run_dir.join("checkpoints"), &data.scenes, &data.val1, &eval_setup(&c))?;
        reports.push(cmd_transfer_eval(&c, &sel.path)?);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("transfer_sweep.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    Ok(reports)
}
