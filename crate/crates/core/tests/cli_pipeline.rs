//! gen-scenes → train → eval → transfer-eval → bench on a tiny setup.

use dynanav::cli::{self, Overrides, RunConfig, SceneManifest};
use dynanav::policy::BlockSpec;
use dynanav::sim::SensorFlavor;
use dynanav::tasks::TaskKind;

fn tiny(dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.out_dir = dir.join("run");
    c.seed = 3;
    c.scenes.dir = dir.join("scenes");
    c.scenes.count = 2;
    c.scenes.subsets = vec![1, 2];
    c.scenes.eval_count = 1;
    c.scenes.train_episodes = 6;
    c.scenes.val1_episodes = 3;
    c.scenes.val2_episodes = 4;
    c.scenes.params.width_m = 6.0;
    c.scenes.params.height_m = 5.0;
    c.scenes.params.max_rooms = 2;
    c.scenes.params.min_room_size_m = 2.0;
    c.env.sensor.width = 16;
    c.env.sensor.height = 16;
    c.env.task.max_steps = 20;
    c.policy.pool = 1;
    c.policy.stem_channels = 4;
    c.policy.blocks = vec![BlockSpec { channels: 4, stride: 2 }];
    c.policy.feature_dim = 8;
    c.policy.hidden = 8;
    c.train.workers = 2;
    c.train.envs_per_worker = 2;
    c.train.rollout_len = 8;
    c.train.ppo.chunk_len = 4;
    c.train.total_steps = 64;
    c.train.checkpoint_interval = 32;
    c.bench.steps = 50;
    c.bench.warmup_steps = 5;
    c.bench.workers = 2;
    c
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cfg.validate().unwrap();

    let m = cli::cmd_gen_scenes(&cfg).unwrap();
    assert_eq!(m.train_scenes.len(), 2);
    assert_eq!(m.subsets[0].scenes, m.train_scenes[..1].to_vec());
    assert_eq!(SceneManifest::load(&cfg.scenes.dir).unwrap(), m);
    // regenerating with the same seed is byte-identical
    let first = std::fs::read(cfg.scenes.dir.join("val2.jsonl")).unwrap();
    cli::cmd_gen_scenes(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.scenes.dir.join("val2.jsonl")).unwrap(), first);

    let report = cli::cmd_train(&cfg).unwrap();
    assert_eq!(report.steps, 64);
    assert_eq!(report.checkpoints.len(), 2);
    assert!(cfg.out_dir.join("train_log.csv").exists());
    assert!(cfg.out_dir.join("config.toml").exists());
    // already complete: resuming does no further work
    assert_eq!(cli::cmd_train(&cfg).unwrap().steps, 64);

    let summary = cli::cmd_eval(&cfg, None).unwrap();
    assert_eq!(summary.per_seed.len(), 1);
    assert_eq!(summary.per_seed[0].aggregate.episodes, 4);
    assert_eq!(summary.effort_metric, "displacement-only surrogate");

    let t = cli::cmd_transfer_eval(&cfg, &report.checkpoints[1]).unwrap();
    assert_eq!(t.scan.episodes, 4);
    assert_eq!(t.delta.success, t.clean.success - t.scan.success);

    let b = cli::cmd_bench(&cfg).unwrap();
    assert_eq!(b.per_worker_steps_per_sec.len(), 2);
    assert!(b.single_worker_steps_per_sec > 0.0);
    assert!(cfg.out_dir.join("bench.json").exists());
}

#[test]
fn overrides_reach_the_setup() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.apply(&Overrides {
        task: Some(TaskKind::InteractiveNav),
        aug: Some("dynamic+crop".into()),
        flavor: Some(SensorFlavor::SyntheticClean),
        ..Default::default()
    })
    .unwrap();
    let setup = cfg.train_setup();
    assert_eq!(setup.task, TaskKind::InteractiveNav);
    assert_eq!(setup.augment.train_ped_count, 6);
    assert_eq!(setup.effective_policy().input_height, 14);
    assert_eq!(setup.env.sensor.flavor, SensorFlavor::SyntheticClean);
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    assert!(matches!(cli::cmd_train(&cfg), Err(dynanav::Error::NotFound(_))));
    assert!(cli::cmd_eval(&cfg, Some(&dir.path().join("nope"))).is_err());
    let mut bad = cfg.clone();
    bad.scenes.train_scenes = 5;
    assert!(bad.validate().is_err());
}
