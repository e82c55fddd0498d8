//! Lifting gerbe of the frame bundle of the sphere and its spin module.

use gerbedex::gerbe;

fn main() -> gerbedex::Result<()> {
    let t = gerbe::s2_frame_transitions()?;
    let layout = t.layout().clone();
    println!("cocycle residual of the sampled transitions: {:.1e}", t.cocycle_residual());

    let (lifted, e) = gerbe::lift_transitions(&t)?;
    println!("e = {:?}", e.cochain().values());
    println!("class trivial: {}", e.is_trivial(layout.nerve())?);

    let spin = gerbe::spin_module(&lifted)?;
    let check = gerbe::verify_module(&spin, &e, &layout)?;
    println!("spinor module: weight {}, residual {:.1e}", spin.weight(), check.residual);

    let square = gerbe::tensor_modules(&spin, &spin)?;
    let bundle = gerbe::descend_weight_zero(&square, &layout)?;
    println!("spinors squared: weight {}, descends with residual {:.1e}", square.weight(), bundle.residual);
    Ok(())
}
