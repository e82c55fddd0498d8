use gerbedex::cech::{self, Cochain, IntMatrix, Nerve, Ring};
use gerbedex::characteristic::SymbolicClass;
use gerbedex::clifford::{self, CliffordElement, SpinElement, SpinorRep};
use gerbedex::geometry::MatrixForm;
use gerbedex::linalg::{self, max_abs};
use gerbedex::spectral;
use gerbedex::{CMatrix, C64};
use num_rational::Rational64;
use proptest::prelude::*;

fn element(dim: usize, coefficients: &[(f64, f64)]) -> CliffordElement {
    let mut x = CliffordElement::zero(dim);
    for (blade, &(re, im)) in coefficients.iter().enumerate().take(1 << dim) {
        x = &x + &CliffordElement::blade(dim, blade as u32, C64::new(re, im));
    }
    x
}

fn coefficients() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16)
}

fn spin(n: usize, rotors: &[(usize, usize, f64)]) -> SpinElement {
    rotors.iter().fold(SpinElement::identity(n), |g, &(i, j, t)| {
        let (i, j) = (i % n, j % n);
        if i == j {
            g
        } else {
            g.compose(&SpinElement::rotor(n, i, j, t))
        }
    })
}

fn rotors() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..6usize, 0..6usize, -3.2..3.2f64), 1..8)
}

fn complexes() -> Vec<Nerve> {
    vec![
        cech::tetrahedron_boundary(),
        cech::minimal_rp2(),
        cech::seven_vertex_torus(),
        cech::suspended_moore_space(3),
    ]
}

fn ring(k: u64) -> Ring {
    if k == 0 {
        Ring::Integers
    } else {
        Ring::from_modulus(k).unwrap()
    }
}

fn reduce(values: &[i64], k: u64) -> Vec<i64> {
    if k == 0 {
        values.to_vec()
    } else {
        values.iter().map(|v| v.rem_euclid(k as i64)).collect()
    }
}

fn scalar_form(dim: usize, degree_mask: &[(u32, f64)]) -> MatrixForm {
    degree_mask.iter().fold(MatrixForm::zero(dim, 1), |acc, &(mask, v)| {
        acc.add(&MatrixForm::term(dim, mask, CMatrix::from_element(1, 1, C64::new(v, 0.0))))
    })
}

fn homogeneous(dim: usize, degree: u32, seed: &[f64]) -> MatrixForm {
    let masks: Vec<u32> = (0..1u32 << dim).filter(|m| m.count_ones() == degree).collect();
    let terms: Vec<(u32, f64)> = masks.iter().zip(seed.iter().cycle()).map(|(&m, &v)| (m, v)).collect();
    scalar_form(dim, &terms)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clifford_product_is_associative(a in coefficients(), b in coefficients(), c in coefficients()) {
        let (x, y, z) = (element(4, &a), element(4, &b), element(4, &c));
        let left = &(&x * &y) * &z;
        let right = &x * &(&y * &z);
        prop_assert!(left.distance(&right) < 1e-12);
    }

    #[test]
    fn vectors_square_to_minus_their_norm(v in prop::collection::vec(-2.0..2.0f64, 1..7)) {
        let x = CliffordElement::vector(&v);
        let norm: f64 = v.iter().map(|t| t * t).sum();
        let square = &x * &x;
        prop_assert!(square.distance(&CliffordElement::scalar(v.len(), C64::new(-norm, 0.0))) < 1e-12);
    }

    #[test]
    fn representation_is_multiplicative(a in coefficients(), b in coefficients(), n in prop::sample::select(vec![2usize, 4])) {
        let rep = SpinorRep::new(n).unwrap();
        let (x, y) = (element(n, &a), element(n, &b));
        let lhs = rep.represent(&(&x * &y)).unwrap();
        let rhs = rep.represent(&x).unwrap() * rep.represent(&y).unwrap();
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn adjoint_projection_is_a_rotation_with_two_lifts(r in rotors(), n in 3usize..6) {
        let g = spin(n, &r);
        let rot = clifford::adjoint_projection(&g);
        let orth = &rot.transpose() * &rot - gerbedex::RMatrix::identity(n, n);
        prop_assert!(linalg::max_abs_real(&orth) < 1e-12);
        prop_assert!((rot.determinant() - 1.0).abs() < 1e-10);
        let lift = clifford::lift_rotation(&rot).unwrap();
        let diff = lift.element().distance(g.element()).min(lift.element().distance(g.negated().element()));
        prop_assert!(diff < 1e-9);
    }

    #[test]
    fn coboundary_squares_to_zero(
        which in 0usize..4,
        q in 0usize..2,
        k in prop::sample::select(vec![0u64, 2, 3, 5]),
        seed in prop::collection::vec(-7i64..8, 200),
    ) {
        let nerve = &complexes()[which];
        let values = reduce(&seed[..nerve.count(q)], k);
        let c = Cochain::new(q, ring(k), values).unwrap();
        let dc = cech::coboundary(&c, nerve).unwrap();
        prop_assert!(cech::coboundary(&dc, nerve).unwrap().is_zero());
        prop_assert!(cech::solve_coboundary(&dc, nerve).unwrap().is_some());
    }

    #[test]
    fn reductions_of_integral_classes_have_trivial_bockstein(seed in prop::collection::vec(-5i64..6, 65)) {
        let nerve = cech::suspended_moore_space(3);
        let c = Cochain::new(1, Ring::Integers, seed[..nerve.count(1)].to_vec()).unwrap();
        let dc = cech::coboundary(&c, &nerve).unwrap().in_ring(Ring::from_modulus(3).unwrap()).unwrap();
        prop_assert!(cech::bockstein(&dc, &nerve).unwrap().trivial);
    }

    #[test]
    fn smith_form_diagonalizes(rows in prop::collection::vec(prop::collection::vec(-6i128..7, 4), 1..5)) {
        let a = IntMatrix::from_rows(&rows);
        let s = cech::smith_normal_form(&a).unwrap();
        let d = s.l.mul(&a).unwrap().mul(&s.r).unwrap();
        for r in 0..d.rows() {
            for c in 0..d.cols() {
                let expected = if r == c && r < s.rank() { s.diagonal[r] } else { 0 };
                prop_assert_eq!(d.get(r, c), expected);
            }
        }
        for w in s.diagonal.windows(2) {
            prop_assert!(w[0] > 0 && w[1] % w[0] == 0);
        }
    }

    #[test]
    fn wedge_is_associative_and_graded_commutative(
        p in 0u32..3, q in 0u32..3,
        a in prop::collection::vec(-1.0..1.0f64, 6),
        b in prop::collection::vec(-1.0..1.0f64, 6),
        c in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let (x, y, z) = (homogeneous(4, p, &a), homogeneous(4, q, &b), homogeneous(4, 1, &c));
        let left = x.wedge(&y).wedge(&z);
        let right = x.wedge(&y.wedge(&z));
        prop_assert!(left.sub(&right).max_abs() < 1e-12);
        let sign = if p * q % 2 == 0 { 1.0 } else { -1.0 };
        let swapped = y.wedge(&x).scale(C64::new(sign, 0.0));
        prop_assert!(x.wedge(&y).sub(&swapped).max_abs() < 1e-12);
    }

    #[test]
    fn symbolic_exponentials_multiply(a in -20i64..20, b in -20i64..20, d in 1i64..5) {
        let (s, t) = (Rational64::new(a, d), Rational64::new(b, d));
        prop_assert_eq!(SymbolicClass::exp(s).mul(&SymbolicClass::exp(t)), SymbolicClass::exp(s + t));
    }

    #[test]
    fn flux_background_has_uniform_plaquettes(n in 8usize..17, m in -5i64..6) {
        prop_assume!(3 * m.unsigned_abs() as usize <= n);
        let g = spectral::build_flux_background(n, m).unwrap();
        let expected = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / (n * n) as f64);
        prop_assert!(g.unitarity_residual() < 1e-12);
        for y in 0..n {
            for x in 0..n {
                prop_assert!((g.plaquette(x, y) - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn monopole_spectrum_bookkeeping(m in -20i64..21, cutoff in 0usize..51) {
        let s = spectral::monopole_kernel(m, cutoff).unwrap();
        prop_assert_eq!(s.index(), m);
        let a = m.unsigned_abs() as usize;
        let expected = a + 2 * (1..=cutoff).map(|k| 2 * k + a).sum::<usize>();
        prop_assert_eq!(s.mode_count(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cohomology_is_invariant_under_relabeling(
        (which, order) in (0usize..4).prop_flat_map(|w| {
            let vertices: Vec<usize> = (0..complexes()[w].vertex_count()).collect();
            (Just(w), Just(vertices).prop_shuffle())
        }),
        k in prop::sample::select(vec![0u64, 2, 3]),
    ) {
        let nerve = &complexes()[which];
        let relabeled = nerve.relabeled(&order).unwrap();
        for q in 0..=nerve.dimension() {
            let a = cech::cohomology(nerve, ring(k), q).unwrap();
            let b = cech::cohomology(&relabeled, ring(k), q).unwrap();
            prop_assert_eq!(a.free_rank(), b.free_rank());
            prop_assert_eq!(a.torsion(), b.torsion());
        }
    }
}
