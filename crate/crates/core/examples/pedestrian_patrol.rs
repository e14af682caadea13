//! Spawns patrolling pedestrians and follows them for 30 seconds.
//!
//! `cargo run --release --example pedestrian_patrol`

use dynanav::augment::{populate_pedestrians, PedestrianParams};
use dynanav::rng::stream;
use dynanav::scene::{generate_scene, SceneParams};
use dynanav::sim::step_pedestrians;

fn main() -> dynanav::Result<()> {
    let scene = generate_scene(9, &SceneParams::default())?;
    let mut peds = populate_pedestrians(&scene, 6, &mut stream(9, "example-peds", 0), &PedestrianParams::default())?;
    for (i, p) in peds.iter().enumerate() {
        println!("pedestrian {i}: track {:.2} m, {} vertices, {:.3} m/s", p.path().length(), p.path().points().len(), p.speed());
    }
    for t in 0..=300 {
        if t % 50 == 0 {
            let pos: Vec<String> = peds.iter().map(|p| format!("({:.1},{:.1})", p.position().x, p.position().y)).collect();
            println!("t={:>4.1}s {}", t as f64 * 0.1, pos.join(" "));
        }
        step_pedestrians(&mut peds, 0.1);
    }
    Ok(())
}
