//! Writes the frame transitions of the torus as a gerbe manifest.

use gerbedex::cli::Manifest;
use gerbedex::geometry::benchmark_registry;

fn main() -> gerbedex::Result<()> {
    let t2 = benchmark_registry("T2", 8)?;
    let manifest = Manifest::from_transitions(&t2.frame_transitions()?);
    let path = std::env::args().nth(1).unwrap_or_else(|| "t2_frame.json".into());
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {path}");
    Ok(())
}
