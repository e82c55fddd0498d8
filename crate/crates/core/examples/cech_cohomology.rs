//! Cohomology of the shipped nerves and the Bockstein of a Z_3 class.

use gerbedex::cech::{self, Ring};
use gerbedex::cli;

fn main() -> gerbedex::Result<()> {
    let complexes = [
        ("sphere", cech::tetrahedron_boundary()),
        ("projective plane", cech::minimal_rp2()),
        ("torus", cech::seven_vertex_torus()),
    ];
    for (name, nerve) in &complexes {
        let groups: Vec<String> = (0..=nerve.dimension())
            .map(|q| cech::cohomology(nerve, Ring::Integers, q).map(|h| h.to_string()))
            .collect::<gerbedex::Result<_>>()?;
        println!("{name}: H^*(Z) = {}", groups.join(", "));
    }

    let file = cli::parse_nerve_file(cli::shipped("lens_k3.nerve").expect("shipped"))?;
    let class = file.cochain.expect("generator");
    let beta = cech::bockstein(&class, &file.nerve)?;
    println!(
        "H^3(Z) of the Moore complex = {}, Bockstein of the Z_3 generator trivial: {}",
        cech::cohomology(&file.nerve, Ring::Integers, 3)?,
        beta.trivial
    );
    Ok(())
}
