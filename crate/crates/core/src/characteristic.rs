//! Characteristic forms: the twisted Chern character, the A-hat genus, the
//! twisting curvature and the relative Chern character, and their pairing with
//! the fundamental class.
//!
//! Curvatures are anti-Hermitian, and every Chern character uses
//! `tr exp(iF/2π)`, so that `(i/2π) ∫ F = m` for the degree-`m` line bundles
//! of the benchmark catalog.
//!
//! `CP^2` is handled in the ring `Q[x]/(x^3)` with `∫ x^2 = 1`, where `x` is
//! the hyperplane class.

use std::f64::consts::PI;

use num_rational::Rational64;
use serde::Serialize;

use crate::clifford::{curvature_element, relative_supertrace, CliffordModuleFiber};
use crate::geometry::{self, Benchmark, ChartAtlas, Curvature, FormField, MatrixForm, ModuleConnection};
use crate::linalg::{self, max_abs};
use crate::{CMatrix, Error, RMatrix, Result, C64};

/// Tolerance for the commutation of the twisting curvature with `c(ξ)`.
pub const COMMUTANT_TOLERANCE: f64 = 1e-8;

/// Highest supported manifold dimension.
pub const MAX_DIMENSION: usize = 4;

fn check_dimension(dim: usize) -> Result<()> {
    if dim > MAX_DIMENSION || dim % 2 == 1 {
        return Err(Error::invalid(format!(
            "characteristic forms are implemented for even dimensions up to {MAX_DIMENSION}, got {dim}"
        )));
    }
    Ok(())
}

/// Polynomial in the hyperplane class of `CP^2`: `c0 + c1 x + c2 x^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolicClass {
    pub coefficients: [Rational64; 3],
}

impl SymbolicClass {
    pub fn new(c0: Rational64, c1: Rational64, c2: Rational64) -> Self {
        SymbolicClass {
            coefficients: [c0, c1, c2],
        }
    }

    pub fn one() -> Self {
        Self::new(1.into(), 0.into(), 0.into())
    }

    /// `exp(t x) = 1 + t x + t^2 x^2 / 2`.
    pub fn exp(t: Rational64) -> Self {
        Self::new(1.into(), t, t * t / 2)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let [a0, a1, a2] = self.coefficients;
        let [b0, b1, b2] = other.coefficients;
        Self::new(a0 * b0, a0 * b1 + a1 * b0, a0 * b2 + a1 * b1 + a2 * b0)
    }

    pub fn scale(&self, s: Rational64) -> Self {
        let [a0, a1, a2] = self.coefficients;
        Self::new(a0 * s, a1 * s, a2 * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        let [a0, a1, a2] = self.coefficients;
        let [b0, b1, b2] = other.coefficients;
        Self::new(a0 + b0, a1 + b1, a2 + b2)
    }

    /// Pairing with the fundamental class.
    pub fn integrate(&self) -> Rational64 {
        self.coefficients[2]
    }
}

/// `p_1(CP^2) = 3 x^2` for the Fubini-Study metric.
pub fn cp2_first_pontryagin() -> SymbolicClass {
    SymbolicClass::new(0.into(), 0.into(), 3.into())
}

/// Inhomogeneous even form, sampled on an atlas or symbolic on `CP^2`.
#[derive(Clone, Debug)]
pub enum MixedForm {
    Field(FormField),
    Symbolic(SymbolicClass),
}

impl MixedForm {
    pub fn as_field(&self) -> Option<&FormField> {
        match self {
            MixedForm::Field(f) => Some(f),
            MixedForm::Symbolic(_) => None,
        }
    }

    pub fn as_symbolic(&self) -> Option<&SymbolicClass> {
        match self {
            MixedForm::Symbolic(s) => Some(s),
            MixedForm::Field(_) => None,
        }
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (MixedForm::Field(a), MixedForm::Field(b)) => Ok(MixedForm::Field(a.wedge(b))),
            (MixedForm::Symbolic(a), MixedForm::Symbolic(b)) => Ok(MixedForm::Symbolic(a.mul(b))),
            _ => Err(Error::invalid("cannot multiply sampled and symbolic forms")),
        }
    }

    /// Largest coefficient difference (sampled forms only).
    pub fn distance(&self, other: &Self) -> Result<f64> {
        match (self, other) {
            (MixedForm::Field(a), MixedForm::Field(b)) => Ok(a.sub(b).max_abs()),
            (MixedForm::Symbolic(a), MixedForm::Symbolic(b)) => Ok(a
                .coefficients
                .iter()
                .zip(&b.coefficients)
                .map(|(x, y)| {
                    let d = *x - *y;
                    (*d.numer() as f64 / *d.denom() as f64).abs()
                })
                .fold(0.0, f64::max)),
            _ => Err(Error::invalid("cannot compare sampled and symbolic forms")),
        }
    }
}

/// `tr exp(iF/2π)` at one point.
pub fn chern_character_form(f: &MatrixForm) -> MatrixForm {
    f.scale(C64::new(0.0, 1.0 / (2.0 * PI))).exp().trace()
}

/// `1 - p_1/24` with `p_1 = -tr(R∧R)/(8π^2)` at one point.
pub fn a_hat_form(r: &MatrixForm) -> MatrixForm {
    let p1 = r.wedge(r).trace().scale(C64::new(-1.0 / (8.0 * PI * PI), 0.0));
    MatrixForm::scalar(r.dim(), C64::new(1.0, 0.0)).add(&p1.scale(C64::new(-1.0 / 24.0, 0.0)))
}

/// `c(R)` applied coefficientwise to an `so(n)`-valued form.
fn clifford_of_form(r: &MatrixForm, actions: &[CMatrix]) -> Result<MatrixForm> {
    let size = actions.first().map(|a| a.nrows()).unwrap_or(0);
    let mut out = MatrixForm::zero(r.dim(), size);
    for (mask, m) in r.terms() {
        let im = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if im > 1e-12 {
            return Err(Error::invalid("tangent curvature must be real"));
        }
        let real = RMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re);
        out = out.add(&MatrixForm::term(r.dim(), mask, curvature_element(&real, actions)?));
    }
    Ok(out)
}

/// Largest `|[F_I, c(e_i)]|` over coefficients and generators.
pub fn commutant_residual(f: &MatrixForm, actions: &[CMatrix]) -> f64 {
    f.terms()
        .flat_map(|(_, m)| actions.iter().map(move |a| max_abs(&linalg::commutator(m, a))))
        .fold(0.0, f64::max)
}

/// `F_E - c(R)` at one point; rejected unless it commutes with the action.
pub fn twisting_curvature_form(f_e: &MatrixForm, r: &MatrixForm, actions: &[CMatrix]) -> Result<MatrixForm> {
    let out = f_e.sub(&clifford_of_form(r, actions)?);
    let residual = commutant_residual(&out, actions);
    if residual > COMMUTANT_TOLERANCE {
        return Err(Error::residual(
            "twisting curvature commutes with the Clifford action",
            residual,
            COMMUTANT_TOLERANCE,
        ));
    }
    Ok(out)
}

/// `Str_{E/S} exp(iF_{E/S}/2π)` at one point.
pub fn relative_chern_form(f_es: &MatrixForm, fiber: &CliffordModuleFiber) -> Result<MatrixForm> {
    let residual = commutant_residual(f_es, fiber.actions());
    if residual > COMMUTANT_TOLERANCE {
        return Err(Error::residual(
            "relative curvature commutes with the Clifford action",
            residual,
            COMMUTANT_TOLERANCE,
        ));
    }
    let e = f_es.scale(C64::new(0.0, 1.0 / (2.0 * PI))).exp();
    let mut out = MatrixForm::zero(f_es.dim(), 1);
    for (mask, m) in e.terms() {
        let st = relative_supertrace(m, fiber)?;
        out = out.add(&MatrixForm::term(f_es.dim(), mask, CMatrix::from_element(1, 1, st)));
    }
    Ok(out)
}

/// `ch = tr exp(iF/2π)` of a descended curvature.
pub fn twisted_chern_character(curvature: &Curvature) -> Result<MixedForm> {
    check_dimension(curvature.field.dim())?;
    if curvature.descent_residual > geometry::GLUING_TOLERANCE {
        return Err(Error::residual(
            "curvature descent",
            curvature.descent_residual,
            geometry::GLUING_TOLERANCE,
        ));
    }
    Ok(MixedForm::Field(curvature.field.map(chern_character_form)))
}

/// `Â = 1 - p_1/24` from the `so(n)`-valued tangent curvature.
pub fn a_hat(r: &FormField) -> Result<MixedForm> {
    check_dimension(r.dim())?;
    Ok(MixedForm::Field(r.map(a_hat_form)))
}

/// `Â = 1 - p_1/24` in the symbolic ring.
pub fn a_hat_symbolic(p1: &SymbolicClass) -> SymbolicClass {
    SymbolicClass::one().add(&p1.scale(Rational64::new(-1, 24)))
}

/// `F_{E/S} = F_E - c(R)` on every node, with the actions `c(e_i)` on `E`.
pub fn twisting_curvature(f_e: &FormField, r: &FormField, actions: &[CMatrix]) -> Result<FormField> {
    let mut c_r = Vec::with_capacity(r.chart_count());
    for a in 0..r.chart_count() {
        c_r.push(
            r.chart_values(a)
                .iter()
                .map(|x| clifford_of_form(x, actions))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let out = f_e.sub(&FormField::from_values(f_e.dim(), f_e.rank(), c_r));
    let residual = (0..out.chart_count())
        .flat_map(|a| out.chart_values(a).iter().map(|x| commutant_residual(x, actions)))
        .fold(0.0, f64::max);
    if residual > COMMUTANT_TOLERANCE {
        return Err(Error::residual(
            "twisting curvature commutes with the Clifford action",
            residual,
            COMMUTANT_TOLERANCE,
        ));
    }
    Ok(out)
}

/// `ch(E/S) = Str_{E/S} exp(iF_{E/S}/2π)` on every node.
pub fn relative_chern_character(f_es: &FormField, fiber: &CliffordModuleFiber) -> Result<MixedForm> {
    check_dimension(f_es.dim())?;
    let mut values = Vec::with_capacity(f_es.chart_count());
    for a in 0..f_es.chart_count() {
        values.push(
            f_es.chart_values(a)
                .iter()
                .map(|x| relative_chern_form(x, fiber))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(MixedForm::Field(FormField::from_values(f_es.dim(), 1, values)))
}

/// Value of the index pairing and its distance to the nearest integer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub manifold: String,
    pub module: String,
    #[serde(rename = "index_topological")]
    pub value: f64,
    #[serde(rename = "nearest_integer")]
    pub nearest: i64,
    pub residual: f64,
}

impl IndexReport {
    pub fn new(manifold: &str, module: &str, value: f64) -> Self {
        let nearest = value.round() as i64;
        IndexReport {
            manifold: manifold.to_string(),
            module: module.to_string(),
            value,
            nearest,
            residual: (value - nearest as f64).abs(),
        }
    }
}

/// `∫ Â(M) ∧ ch(W)` on a sampled manifold; the top-degree part of the
/// product is integrated.
pub fn pair_with_fundamental_class(a_hat: &MixedForm, ch: &MixedForm, atlas: Option<&ChartAtlas>) -> Result<f64> {
    match a_hat.wedge(ch)? {
        MixedForm::Field(f) => {
            let atlas = atlas.ok_or_else(|| Error::invalid("sampled forms need an atlas"))?;
            let top = f.map(|x| x.part(atlas.dim() as u32));
            Ok(geometry::integrate_top(&top, atlas)?.re)
        }
        MixedForm::Symbolic(s) => {
            let v = s.integrate();
            Ok(*v.numer() as f64 / *v.denom() as f64)
        }
    }
}

/// `<Â(M) ch(W), [M]>` for a connection `w` on a module of the benchmark's catalog.
pub fn topological_index(benchmark: &Benchmark, w: &ModuleConnection) -> Result<IndexReport> {
    let atlas = benchmark.atlas()?;
    let curv = geometry::curvature(w, atlas)?;
    let ch = twisted_chern_character(&curv)?;
    let ah = a_hat(&benchmark.tangent_curvature()?)?;
    let value = pair_with_fundamental_class(&ah, &ch, Some(atlas))?;
    Ok(IndexReport::new(benchmark.manifold.name(), &w.name, value))
}

/// Exact pairing on `CP^2` for `ch(W) = exp(t x)`.
pub fn cp2_index(t: Rational64) -> (Rational64, IndexReport) {
    let ah = a_hat_symbolic(&cp2_first_pontryagin());
    let exact = ah.mul(&SymbolicClass::exp(t)).integrate();
    let value = *exact.numer() as f64 / *exact.denom() as f64;
    (exact, IndexReport::new("CP2", &format!("L^({t})"), value))
}

/// `∫ p_1` and `∫ c_1^2` of `CP^2`, computed by quadrature from the
/// Fubini-Study curvature on the affine chart `C^2` (integrands are
/// `U(2)`-invariant, so a radial rule with `r = tan t` suffices).
pub fn cp2_quadrature_numbers(order: usize) -> (f64, f64) {
    let (nodes, weights) = linalg::gauss_legendre(order);
    let mut p1 = 0.0;
    let mut c1sq = 0.0;
    for (s, w) in nodes.iter().zip(&weights) {
        let t = 0.25 * PI * (s + 1.0);
        let r = t.tan();
        let jac = 0.25 * PI / t.cos().powi(2);
        let theta = fubini_study_curvature(&[r, 0.0, 0.0, 0.0]);
        let tr2 = theta.wedge(&theta).trace().scalar_component(0b1111);
        let tr1 = theta.trace();
        let c1 = tr1.scale(C64::new(0.0, 1.0 / (2.0 * PI)));
        let c1c1 = c1.wedge(&c1).scalar_component(0b1111);
        let shell = 2.0 * PI * PI * r.powi(3) * jac * w;
        p1 += shell * (-tr2 / (4.0 * PI * PI)).re;
        c1sq += shell * c1c1.re;
    }
    (p1, c1sq)
}

/// Transposed Hermitian metric `G^T` of `∂∂̄ log(1+|z|^2)` and its
/// `∂_{z_l}` derivatives.
fn fs_metric(z: &[C64; 2]) -> (CMatrix, [CMatrix; 2]) {
    let s = 1.0 + z[0].norm_sqr() + z[1].norm_sqr();
    let zz = CMatrix::from_fn(2, 2, |j, k| z[j] * z[k].conj());
    let numerator = linalg::identity(2) * C64::new(s, 0.0) - &zz;
    let g = &numerator / C64::new(s * s, 0.0);
    let d = |l: usize| {
        let mut first = linalg::identity(2) * z[l].conj();
        for k in 0..2 {
            first[(l, k)] -= z[k].conj();
        }
        first / C64::new(s * s, 0.0) - &numerator * (z[l].conj() * 2.0 / (s * s * s))
    };
    (g, [d(0), d(1)])
}

/// Chern curvature `Θ = ∂̄(h^{-1} ∂h)` of `T^{1,0} CP^2` at a point of the
/// affine chart, as a form in the real coordinates `(x1, y1, x2, y2)`.
fn fubini_study_curvature(p: &[f64; 4]) -> MatrixForm {
    let connection = |q: &[f64; 4]| {
        let z = [C64::new(q[0], q[1]), C64::new(q[2], q[3])];
        let (g, dg) = fs_metric(&z);
        let inv = linalg::try_inverse(&g).expect("metric is positive definite");
        [&inv * &dg[0], &inv * &dg[1]]
    };
    let h = 1e-3;
    // ∂_{q_a} θ_l by fourth-order central differences
    let partial = |a: usize| {
        let at = |s: f64| {
            let mut q = *p;
            q[a] += s * h;
            connection(&q)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        [0, 1].map(|l| (&m2[l] - &m1[l] * C64::new(8.0, 0.0) + &p1[l] * C64::new(8.0, 0.0) - &p2[l]) / C64::new(12.0 * h, 0.0))
    };
    let derivs: Vec<[CMatrix; 2]> = (0..4).map(partial).collect();
    let dz = |l: usize, conj: bool| {
        let im = if conj { -1.0 } else { 1.0 };
        MatrixForm::term(4, 1 << (2 * l), linalg::identity(2)).add(&MatrixForm::term(
            4,
            1 << (2 * l + 1),
            linalg::identity(2) * C64::new(0.0, im),
        ))
    };
    let mut theta = MatrixForm::zero(4, 2);
    for k in 0..2 {
        for l in 0..2 {
            // ∂_{z̄_k} = (∂_{x_k} + i ∂_{y_k}) / 2
            let coef = (&derivs[2 * k][l] + &derivs[2 * k + 1][l] * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0);
            let basis = dz(k, true).wedge(&dz(l, false));
            theta = theta.add(&basis.map(|b| b * &coef));
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{extract_twisting_factor, SpinorRep};
    use crate::geometry::{benchmark_registry, curvature};

    fn binomial(n: i64, k: i64) -> i64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn trivial_module_character_is_rank() {
        let b = benchmark_registry("T2", 6).unwrap();
        let curv = curvature(&b.trivial(3).unwrap(), b.atlas().unwrap()).unwrap();
        let ch = twisted_chern_character(&curv).unwrap();
        for x in ch.as_field().unwrap().chart_values(0) {
            assert_eq!(x.scalar_component(0), C64::new(3.0, 0.0));
            assert_eq!(x.part(2).max_abs(), 0.0);
        }
    }

    #[test]
    fn degree_parts_of_character() {
        let dim = 4;
        let f = MatrixForm::term(dim, 0b0011, CMatrix::from_element(1, 1, C64::new(0.0, 1.3)))
            .add(&MatrixForm::term(dim, 0b1100, CMatrix::from_element(1, 1, C64::new(0.0, -0.7))));
        let ch = chern_character_form(&f);
        let c1 = f.scale(C64::new(0.0, 1.0 / (2.0 * PI)));
        assert_eq!(ch.scalar_component(0), C64::new(1.0, 0.0));
        assert!((ch.scalar_component(0b0011) - c1.scalar_component(0b0011)).norm() < 1e-15);
        let expected = c1.wedge(&c1).scalar_component(0b1111) / 2.0;
        assert!((ch.scalar_component(0b1111) - expected).norm() < 1e-15);
    }

    #[test]
    fn a_hat_is_one_in_dimension_two() {
        for name in ["S2", "T2"] {
            let b = benchmark_registry(name, 8).unwrap();
            let ah = a_hat(&b.tangent_curvature().unwrap()).unwrap();
            for x in ah.as_field().unwrap().chart_values(0) {
                assert_eq!(x.scalar_component(0), C64::new(1.0, 0.0));
                assert_eq!(x.part(2).max_abs(), 0.0);
            }
        }
        assert_eq!(
            a_hat_symbolic(&cp2_first_pontryagin()),
            SymbolicClass::new(1.into(), 0.into(), Rational64::new(-1, 8))
        );
    }

    #[test]
    fn index_on_torus_and_sphere() {
        let t2 = benchmark_registry("T2", 8).unwrap();
        let s2 = benchmark_registry("S2", 32).unwrap();
        for m in -3..=3 {
            let r = topological_index(&t2, &t2.line_bundle(m).unwrap()).unwrap();
            assert!((r.value - m as f64).abs() < 1e-10);
            let r = topological_index(&s2, &s2.line_bundle(m).unwrap()).unwrap();
            assert!((r.value - m as f64).abs() < 1e-6);
            assert_eq!(r.nearest, m);
        }
    }

    #[test]
    fn cp2_index_counts_monomials() {
        for k in 0..=4 {
            let (exact, report) = cp2_index(Rational64::new(2 * k + 3, 2));
            assert_eq!(exact, Rational64::from_integer(binomial(k + 2, 2)));
            assert!(report.residual < 1e-9);
        }
        let ch = SymbolicClass::exp(Rational64::new(3, 2));
        assert_eq!(ch.coefficients[1], Rational64::new(3, 2));
        assert_eq!(ch.coefficients[2], Rational64::new(9, 8));
    }

    #[test]
    fn cp2_numbers_by_quadrature() {
        let (p1, c1sq) = cp2_quadrature_numbers(64);
        assert!((p1 - 3.0).abs() < 1e-4, "p1 {p1}");
        assert!((c1sq - 9.0).abs() < 1e-4, "c1^2 {c1sq}");
    }

    #[test]
    fn spin_connection_has_no_twisting_curvature() {
        let b = benchmark_registry("S2", 16).unwrap();
        let atlas = b.atlas().unwrap();
        let r = b.tangent_curvature().unwrap();
        let actions = b.spinor_actions().unwrap();
        let f = curvature(&b.spinor_module().unwrap(), atlas).unwrap().field;
        assert!(twisting_curvature(&f, &r, &actions).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn twisted_spinors_relative_character_matches_line_bundle() {
        let b = benchmark_registry("S2", 16).unwrap();
        let atlas = b.atlas().unwrap();
        let rep = SpinorRep::new(2).unwrap();
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 1);
        let actions: Vec<CMatrix> = fiber.actions().to_vec();
        for m in [-2, 1, 3] {
            let f = curvature(&b.twisted_spinors(m).unwrap(), atlas).unwrap().field;
            let fes = twisting_curvature(&f, &b.tangent_curvature().unwrap(), &actions).unwrap();
            let fl = curvature(&b.line_bundle(m).unwrap(), atlas).unwrap();
            assert!(fes.sub(&fl.field.map(|x| x.tensor_identity_left(2))).max_abs() < 1e-10);
            let rel = relative_chern_character(&fes, &fiber).unwrap();
            let ch = twisted_chern_character(&fl).unwrap();
            assert!(rel.distance(&ch).unwrap() < 1e-8);
        }
    }

    #[test]
    fn relative_character_is_basis_independent() {
        let rep = SpinorRep::new(4).unwrap();
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 2);
        let psi = MatrixForm::term(4, 0b0101, CMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.4), C64::new(0.3, 0.1), C64::new(-0.3, 0.1), C64::new(0.0, -0.2),
        ]));
        let f_es = psi.tensor_identity_left(4);
        let raw = CMatrix::from_fn(8, 8, |i, j| C64::new(((i * 3 + j * 5) % 7) as f64 / 7.0, ((i + 2 * j) % 5) as f64 / 5.0));
        let u = raw.qr().q();
        let u_inv = u.adjoint();
        let conj = fiber.conjugated(&u).unwrap();
        let a = relative_chern_form(&f_es, &fiber).unwrap();
        let b = relative_chern_form(&f_es.conjugate(&u, &u_inv), &conj).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-10);
        let factor = extract_twisting_factor(&conj, &rep).unwrap();
        let w = f_es.conjugate(&u, &u_inv).map(|m| factor.twisting_part(m));
        assert!(chern_character_form(&w).sub(&a).max_abs() < 1e-10);
    }

    #[test]
    fn incompatible_curvature_is_rejected() {
        let rep = SpinorRep::new(2).unwrap();
        let f = MatrixForm::term(2, 0b11, rep.generators()[0].clone());
        let r = MatrixForm::zero(2, 2);
        assert!(twisting_curvature_form(&f, &r, rep.generators()).is_err());
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 1);
        assert!(relative_chern_form(&f, &fiber).is_err());
    }

    #[test]
    fn unsupported_dimension() {
        assert!(check_dimension(6).is_err());
        assert!(check_dimension(4).is_ok());
    }
}
