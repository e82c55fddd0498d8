//! Overlap index of the Wilson-Dirac operator in a uniform flux background.

use gerbedex::spectral::{self, CompareParams};

fn main() -> gerbedex::Result<()> {
    let params = CompareParams::default();
    for m in -3..=3 {
        let torus = spectral::index_compare("T2", m, &params)?;
        let sphere = spectral::index_compare("S2", m, &params)?;
        println!(
            "m = {m:+}: torus {} vs {:.6}, sphere {} vs {:.6}",
            torus.index_spectral, torus.index_topological, sphere.index_spectral, sphere.index_topological
        );
    }
    Ok(())
}
