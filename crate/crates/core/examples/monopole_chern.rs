//! Chern numbers of monopole bundles and the relative Chern character of
//! twisted spinors on the sphere.

use gerbedex::characteristic;
use gerbedex::clifford::{CliffordModuleFiber, SpinorRep};
use gerbedex::geometry::{self, benchmark_registry};

fn main() -> gerbedex::Result<()> {
    let s2 = benchmark_registry("S2", geometry::quadrature_order())?;
    let atlas = s2.atlas()?;
    let rep = SpinorRep::new(2)?;
    let fiber = CliffordModuleFiber::twisted_spinors(&rep, 1);
    for m in -3..=3 {
        let line = s2.line_bundle(m)?;
        let index = characteristic::topological_index(&s2, &line)?;
        let f_e = geometry::curvature(&s2.twisted_spinors(m)?, atlas)?.field;
        let f_es = characteristic::twisting_curvature(&f_e, &s2.tangent_curvature()?, fiber.actions())?;
        let relative = characteristic::relative_chern_character(&f_es, &fiber)?;
        let ch = characteristic::twisted_chern_character(&geometry::curvature(&line, atlas)?)?;
        println!(
            "m = {m:+}: index {:.12}, |ch(E/S) - ch(L)| = {:.1e}",
            index.value,
            relative.distance(&ch)?
        );
    }
    Ok(())
}
