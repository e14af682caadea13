//! Random-action simulator throughput for one and several workers.
//!
//! `cargo run --release --example throughput -- [workers] [steps]`

use dynanav::cli::{cmd_bench, RunConfig};

fn main() -> dynanav::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.bench.workers = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    cfg.bench.steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    cfg.out_dir = std::env::temp_dir().join("dynanav-throughput");
    for flavor in ["scan", "clean"] {
        cfg.env.sensor.flavor = flavor.parse()?;
        let b = cmd_bench(&cfg)?;
        println!(
            "{flavor:>5} {}x{}: single {:.0} steps/s, {} workers {:.0} steps/s (efficiency {:.2}, {} hardware threads)",
            b.width,
            b.height,
            b.single_worker_steps_per_sec,
            b.workers,
            b.aggregate_steps_per_sec,
            b.scaling_efficiency,
            b.host_threads
        );
    }
    Ok(())
}
