//! Rewrites the generated fixtures under `assets/`: the five trial logs and
//! the noisy cube cloud. Run after editing the scene, robot or config.
//!
//!     cargo run -p hullguard-core --example regenerate_assets

use std::path::Path;

use hullguard_core::geometry::ply::write_ply;
use hullguard_core::geometry::Vec3;
use hullguard_core::perception::synthetic::noisy_cube_cloud;
use hullguard_core::teleop::script::{bundled_scripts, record};
use hullguard_core::teleop::TrialSetup;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let setup = TrialSetup::bundled();
    for script in bundled_scripts() {
        let path = assets.join("trials").join(format!("{}.jsonl", script.name));
        record(&script, &setup)?.write(&path)?;
        println!("wrote {}", path.display());
    }
    let cloud = noisy_cube_cloud(Vec3::new(0.0, 0.0, 1.0), 0.2, 0.005, 12_000, 120, 0);
    let path = assets.join("cube.ply");
    write_ply(&cloud, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    println!("wrote {}", path.display());
    Ok(())
}
