//! Renders one view under both sensor flavors and writes 16-bit PGMs.
//!
//! `cargo run --release --example render_depth -- [out_dir]`

use dynanav::geom::Pose;
use dynanav::rng::stream;
use dynanav::scene::{generate_scene, sample_navigable_point, SceneParams};
use dynanav::sim::{render_depth, write_pgm16, SensorConfig, SensorFlavor, SimConfig};

fn main() -> dynanav::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "depth".into()));
    std::fs::create_dir_all(&out)?;
    let scene = generate_scene(5, &SceneParams::default())?;
    let pos = sample_navigable_point(&scene, &mut stream(5, "example-pose", 0), 0.3)?;
    let pose = Pose::new(pos, 0.7);
    for flavor in [SensorFlavor::SyntheticClean, SensorFlavor::ScanLike] {
        let cfg = SensorConfig { flavor, ..Default::default() };
        let img = render_depth(&scene, &[], &[], &pose, &cfg, &SimConfig::default());
        let v = img.values();
        let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
        let far = v.iter().filter(|&&x| x >= 1.0).count();
        let path = out.join(format!("{}.pgm", flavor.name()));
        write_pgm16(&img, &path)?;
        println!("{:>5}: {}x{}, mean depth {mean:.3}, {far} max-range pixels -> {}", flavor.name(), img.width(), img.height(), path.display());
    }
    Ok(())
}
