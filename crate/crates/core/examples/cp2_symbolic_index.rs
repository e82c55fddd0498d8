//! Spin-c indices on CP2 for the twists L^(k + 3/2).

use gerbedex::characteristic;
use num_rational::Rational64;

fn main() {
    let (p1, c1sq) = characteristic::cp2_quadrature_numbers(64);
    println!("quadrature: p1 = {p1:.8}, c1^2 = {c1sq:.8}");
    for k in 0..=4 {
        let (index, _) = characteristic::cp2_index(Rational64::new(2 * k + 3, 2));
        println!("k = {k}: index {index}");
    }
}
