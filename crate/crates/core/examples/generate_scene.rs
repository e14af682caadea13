//! Generates a procedural apartment, prints it, and saves it in the scene
//! text format.
//!
//! ```bash
//! cargo run -p dynanav --example generate_scene -- 7 /tmp/scene.txt
//! ```

use dynanav::scene::{generate_scene, save_scene, scene_to_string, SceneParams};

fn main() -> dynanav::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let out = args.next();

    let params = SceneParams::default();
    let scene = generate_scene(seed, &params)?;
    let g = scene.grid();
    let free = g.cells().iter().filter(|c| c.is_free()).count();
    println!(
        "{}: {}x{} cells at {} m, {:.1} m² free",
        scene.id(),
        g.width(),
        g.height(),
        g.resolution(),
        free as f64 * g.resolution().powi(2)
    );

    // downsample 4x for the terminal
    let text = scene_to_string(&scene);
    for line in text.lines().skip(6).step_by(4) {
        println!("{}", line.chars().step_by(2).collect::<String>());
    }

    if let Some(path) = out {
        save_scene(&scene, &path)?;
        println!("saved to {path}");
    }
    Ok(())
}
