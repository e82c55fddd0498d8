//! Spinor representations, the double cover and the loop that lifts to -1.

use std::f64::consts::PI;

use gerbedex::clifford::{self, CliffordElement, SpinElement, SpinorRep};
use gerbedex::RMatrix;

fn main() -> gerbedex::Result<()> {
    for n in [2, 4, 6] {
        let rep = SpinorRep::new(n)?;
        println!(
            "n = {n}: spinors of dimension {}, blade span {}, anticommutation residual {:.1e}",
            rep.spinor_dimension(),
            rep.span_rank(),
            rep.anticommutation_residual()
        );
    }

    let v = CliffordElement::vector(&[1.0, 2.0, 2.0]);
    println!("c(v)^2 = {}", (&v * &v).scalar_part());

    let g = SpinElement::rotor(3, 0, 1, PI / 3.0);
    println!("Ad(rotor) =\n{:.4}", clifford::adjoint_projection(&g));

    let path: Vec<RMatrix> = (0..=64)
        .map(|s| {
            let t = 2.0 * PI * s as f64 / 64.0;
            let mut r = RMatrix::identity(3, 3);
            r[(0, 0)] = t.cos();
            r[(0, 1)] = -t.sin();
            r[(1, 0)] = t.sin();
            r[(1, 1)] = t.cos();
            r
        })
        .collect();
    let lifts = clifford::propagate_lift(&path, &SpinElement::identity(3))?;
    println!("lift of a full turn ends at {:?}", lifts.last().unwrap().central_sign(1e-9));
    Ok(())
}
