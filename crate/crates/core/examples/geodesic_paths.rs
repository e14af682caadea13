//! Distance field and shortest path between two random points of a
//! procedural scene.
//!
//! `cargo run --release --example geodesic_paths -- [seed]`

use dynanav::rng::stream;
use dynanav::scene::{compute_distance_field, generate_scene, sample_navigable_point, shortest_path, SceneParams};

fn main() -> dynanav::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let scene = generate_scene(seed, &SceneParams::default())?;
    let mut rng = stream(seed, "example-points", 0);
    let clearance = 0.23;
    let a = sample_navigable_point(&scene, &mut rng, clearance)?;
    let b = sample_navigable_point(&scene, &mut rng, clearance)?;
    let field = compute_distance_field(&scene, b)?;
    let path = shortest_path(&scene, a, b, clearance)?;
    println!("{}: ({:.2}, {:.2}) -> ({:.2}, {:.2})", scene.id(), a.x, a.y, b.x, b.y);
    println!("euclidean {:.3} m", a.distance(b));
    println!("geodesic  {:.3} m (grid field)", field.geodesic_distance(a)?);
    println!("polyline  {:.3} m, {} vertices (clearance {clearance} m)", path.length(), path.points().len());
    for p in path.points() {
        println!("  {:.2} {:.2}", p.x, p.y);
    }
    let reachable = field.values().iter().filter(|v| v.is_finite()).count();
    println!("{reachable} of {} cells reach the goal", field.values().len());
    Ok(())
}
