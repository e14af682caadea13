//! End-to-end sensor transfer on a small setup: generate scenes, train
//! briefly under the scan-like flavor, then evaluate under both flavors.
//!
//! `cargo run --release --example transfer_eval -- [work_dir]`

use dynanav::cli::{cmd_gen_scenes, cmd_train, cmd_transfer_eval, RunConfig};
use dynanav::sim::SensorFlavor;

fn main() -> dynanav::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "transfer-demo".into()));
    let mut cfg = RunConfig::default();
    cfg.scenes.dir = dir.join("scenes");
    cfg.out_dir = dir.join("run");
    cfg.scenes.count = 2;
    cfg.scenes.subsets = vec![1, 2];
    cfg.scenes.eval_count = 2;
    cfg.scenes.val2_episodes = 40;
    cfg.env.sensor.flavor = SensorFlavor::ScanLike;
    cfg.train.total_steps = 8192;
    cfg.train.checkpoint_interval = 4096;
    cmd_gen_scenes(&cfg)?;
    let run = cmd_train(&cfg)?;
    let ckpt = run.checkpoints.last().expect("training writes a final checkpoint");
    let r = cmd_transfer_eval(&cfg, ckpt)?;
    println!("checkpoint step {} ({})", r.checkpoint_step, r.effort_metric);
    for (name, a) in [("scan", r.scan), ("clean", r.clean)] {
        println!("{name:>5}: success {:.3} spl {:.3} ins {:.3}", a.success, a.spl, a.ins);
    }
    println!("delta (clean - scan): success {:+.3} spl {:+.3}", r.delta.success, r.delta.spl);
    Ok(())
}
