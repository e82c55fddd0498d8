//! Complex Clifford algebras `C(V)`, `V = R^n` with `n` even.
//!
//! Sign convention, used everywhere in the crate: generators are skew,
//! `e_i e_j + e_j e_i = -2 delta_ij`, so `c(v)^2 = -|v|^2` and the matrices
//! representing `c(v)` are anti-Hermitian.
//!
//! Generators are indexed from `0` to `n - 1`; a basis blade is a bitmask whose
//! bit `i` records the presence of `e_i`, and its factors are always
//! multiplied in increasing index order.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::linalg::{self, max_abs};
use crate::{CMatrix, Error, RMatrix, Result, C64};

/// Blade bitmask.
pub type Blade = u32;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest supported Clifford dimension for blade arithmetic.
pub const MAX_DIMENSION: usize = 16;
/// Largest dimension for which matrix spinor representations are built.
pub const MAX_SPINOR_DIMENSION: usize = 8;

/// Distance (operator norm) between a rotation and the projection of the
/// reference lift beyond which `nearest_lift` refuses to choose.
pub const LIFT_THRESHOLD: f64 = 0.5;

fn blade_grade(b: Blade) -> u32 {
    b.count_ones()
}

/// Sign of `e_a e_b = sign * e_{a ^ b}` in the skew convention.
fn blade_product_sign(a: Blade, b: Blade) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    // each repeated generator squares to -1
    let total = swaps + (a & b).count_ones();
    if total.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Element of the complex Clifford algebra on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordElement {
    dim: usize,
    coeffs: BTreeMap<Blade, C64>,
}

impl CliffordElement {
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIMENSION, "Clifford dimension {dim} unsupported");
        CliffordElement {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, value: C64) -> Self {
        Self::blade(dim, 0, value)
    }

    /// `value * e_B` for a blade bitmask `B`.
    pub fn blade(dim: usize, blade: Blade, value: C64) -> Self {
        let mut out = Self::zero(dim);
        assert!(
            dim == 32 || (blade >> dim) == 0,
            "blade {blade:#b} outside dimension {dim}"
        );
        if value != ZERO {
            out.coeffs.insert(blade, value);
        }
        out
    }

    /// Product `e_{i_1} e_{i_2} ...` of generators in the given order.
    pub fn monomial(dim: usize, indices: &[usize]) -> Self {
        let mut out = Self::scalar(dim, ONE);
        for &i in indices {
            out = &out * &Self::generator(dim, i);
        }
        out
    }

    pub fn generator(dim: usize, i: usize) -> Self {
        assert!(i < dim, "generator index {i} out of range for dimension {dim}");
        Self::blade(dim, 1 << i, ONE)
    }

    /// Clifford image `c(v) = sum v_i e_i` of a real vector.
    pub fn vector(v: &[f64]) -> Self {
        let mut out = Self::zero(v.len());
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                out.coeffs.insert(1 << i, C64::new(x, 0.0));
            }
        }
        out
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn coefficient(&self, blade: Blade) -> C64 {
        self.coeffs.get(&blade).copied().unwrap_or(ZERO)
    }

    /// Nonzero coefficients in ascending blade order.
    pub fn terms(&self) -> impl Iterator<Item = (Blade, C64)> + '_ {
        self.coeffs.iter().map(|(&b, &c)| (b, c))
    }

    pub fn scalar_part(&self) -> C64 {
        self.coefficient(0)
    }

    /// Grade-`k` projection.
    pub fn grade(&self, k: u32) -> Self {
        CliffordElement {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(&b, _)| blade_grade(b) == k)
                .map(|(&b, &c)| (b, c))
                .collect(),
        }
    }

    /// True when every blade has even grade (tolerance on coefficients).
    pub fn is_even(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .all(|(&b, c)| blade_grade(b).is_multiple_of(2) || c.norm() <= tol)
    }

    pub fn is_odd(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .all(|(&b, c)| blade_grade(b) % 2 == 1 || c.norm() <= tol)
    }

    /// Reversion anti-automorphism: `e_{i1}...e_{ik} -> e_{ik}...e_{i1}`.
    pub fn reverse(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(&b, &c)| {
                let k = blade_grade(b);
                let s = if (k * k.saturating_sub(1) / 2).is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                };
                (b, c * s)
            })
            .collect();
        CliffordElement {
            dim: self.dim,
            coeffs,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero(self.dim);
        if s != ZERO {
            for (&b, &c) in &self.coeffs {
                out.coeffs.insert(b, c * s);
            }
        }
        out
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient modulus of `self - other`.
    pub fn distance(&self, other: &Self) -> f64 {
        (self - other)
            .coeffs
            .values()
            .fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Clifford product; rejects operands of different dimension.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = Self::zero(self.dim);
        for (&a, &ca) in &self.coeffs {
            for (&b, &cb) in &other.coeffs {
                let s = blade_product_sign(a, b);
                *out.coeffs.entry(a ^ b).or_insert(ZERO) += ca * cb * s;
            }
        }
        out.coeffs.retain(|_, c| *c != ZERO);
        Ok(out)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.dim, other.dim, "Clifford dimension mismatch");
        let mut out = self.clone();
        for (&b, &c) in &other.coeffs {
            *out.coeffs.entry(b).or_insert(ZERO) += c * sign;
        }
        out.coeffs.retain(|_, c| *c != ZERO);
        out
    }
}

/// Clifford product. Panics on a dimension mismatch; use
/// [`CliffordElement::multiply`] for a checked product.
impl Mul for &CliffordElement {
    type Output = CliffordElement;

    fn mul(self, rhs: &CliffordElement) -> CliffordElement {
        self.multiply(rhs).expect("Clifford dimension mismatch")
    }
}

impl Add for &CliffordElement {
    type Output = CliffordElement;

    fn add(self, rhs: &CliffordElement) -> CliffordElement {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &CliffordElement {
    type Output = CliffordElement;

    fn sub(self, rhs: &CliffordElement) -> CliffordElement {
        self.combine(rhs, -1.0)
    }
}

impl Neg for &CliffordElement {
    type Output = CliffordElement;

    fn neg(self) -> CliffordElement {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Free-function form of the Clifford product.
pub fn clifford_multiply(a: &CliffordElement, b: &CliffordElement) -> Result<CliffordElement> {
    a.multiply(b)
}

fn pauli() -> [CMatrix; 3] {
    let i = C64::new(0.0, 1.0);
    [
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

fn kron_all(factors: &[CMatrix]) -> CMatrix {
    factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// Spin representation `Sigma = Sigma+ (+) Sigma-` of `C(R^n)`.
///
/// Built by the iterated tensor (Jordan-Wigner) construction with
/// `m = n/2` factors of `C^2`:
///
/// ```text
/// gamma_{2j}   = s3 (x) ... (x) s3 (x) i s1 (x) 1 (x) ... (x) 1
/// gamma_{2j+1} = s3 (x) ... (x) s3 (x) i s2 (x) 1 (x) ... (x) 1
/// ```
///
/// with `j` leading `s3` factors. The chirality is `s3 (x) ... (x) s3`, which
/// equals the image of the volume element `i^{n/2} e_0 e_1 ... e_{n-1}`.
#[derive(Clone, Debug)]
pub struct SpinorRep {
    dim: usize,
    generators: Vec<CMatrix>,
    chirality: CMatrix,
    blade_images: Vec<CMatrix>,
}

impl SpinorRep {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 1 || n > MAX_SPINOR_DIMENSION {
            return Err(Error::invalid(format!(
                "spinor representations need even n in 2..={MAX_SPINOR_DIMENSION}, got {n}"
            )));
        }
        let m = n / 2;
        let [s1, s2, s3] = pauli();
        let i = C64::new(0.0, 1.0);
        let id2 = linalg::identity(2);
        let mut generators = Vec::with_capacity(n);
        for j in 0..m {
            for s in [&s1, &s2] {
                let factors: Vec<CMatrix> = (0..m)
                    .map(|slot| {
                        if slot < j {
                            s3.clone()
                        } else if slot == j {
                            s * i
                        } else {
                            id2.clone()
                        }
                    })
                    .collect();
                generators.push(kron_all(&factors));
            }
        }
        let chirality = kron_all(&vec![s3.clone(); m]);
        let size = 1usize << m;
        let blade_images = (0..(1u32 << n))
            .map(|b| {
                let mut acc = linalg::identity(size);
                for g in 0..n {
                    if b & (1 << g) != 0 {
                        acc *= &generators[g];
                    }
                }
                acc
            })
            .collect();
        Ok(SpinorRep {
            dim: n,
            generators,
            chirality,
            blade_images,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Complex dimension `2^{n/2}` of `Sigma`.
    pub fn spinor_dimension(&self) -> usize {
        1 << (self.dim / 2)
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    pub fn chirality(&self) -> &CMatrix {
        &self.chirality
    }

    /// Image of a basis blade.
    pub fn blade_image(&self, blade: Blade) -> &CMatrix {
        &self.blade_images[blade as usize]
    }

    /// Indices of the `+1` / `-1` chirality eigenvectors (the chirality is
    /// diagonal in this construction).
    pub fn chiral_indices(&self, positive: bool) -> Vec<usize> {
        (0..self.spinor_dimension())
            .filter(|&k| (self.chirality[(k, k)].re > 0.0) == positive)
            .collect()
    }

    /// Algebra map `C(V) -> End(Sigma)`.
    pub fn represent(&self, x: &CliffordElement) -> Result<CMatrix> {
        if x.dimension() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dimension(),
            });
        }
        let size = self.spinor_dimension();
        let mut out = CMatrix::zeros(size, size);
        for (b, c) in x.terms() {
            out += self.blade_image(b) * c;
        }
        Ok(out)
    }

    /// Inverse of [`represent`](Self::represent): the Clifford element whose
    /// image is `m`, using the trace pairing (blade images are unitary and
    /// trace-orthogonal).
    pub fn element_of(&self, m: &CMatrix) -> Result<CliffordElement> {
        let size = self.spinor_dimension();
        if m.shape() != (size, size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: m.nrows(),
            });
        }
        let mut out = CliffordElement::zero(self.dim);
        for b in 0..(1u32 << self.dim) {
            let img = self.blade_image(b);
            let c = (img.adjoint() * m).trace() / size as f64;
            if c.norm() > 1e-15 {
                out.coeffs.insert(b, c);
            }
        }
        Ok(out)
    }

    /// Rank of the span of all blade images, `4^{n/2}` when
    /// `C(V) -> End(Sigma)` is an isomorphism.
    pub fn span_rank(&self) -> usize {
        let size = self.spinor_dimension();
        let cols = self.blade_images.len();
        let mut m = CMatrix::zeros(size * size, cols);
        for (c, img) in self.blade_images.iter().enumerate() {
            for (r, v) in img.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        linalg::rank(&m, 1e-10)
    }

    /// Largest deviation from `g_i g_j + g_j g_i = -2 delta_ij`.
    pub fn anticommutation_residual(&self) -> f64 {
        anticommutation_residual(&self.generators)
    }
}

/// Largest entry of `a_i a_j + a_j a_i + 2 delta_ij` over all pairs.
pub fn anticommutation_residual(actions: &[CMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in actions.iter().enumerate() {
        for (j, b) in actions.iter().enumerate() {
            let mut r = linalg::anticommutator(a, b);
            if i == j {
                r += linalg::identity(a.nrows()) * C64::new(2.0, 0.0);
            }
            worst = worst.max(max_abs(&r));
        }
    }
    worst
}

/// Element of `Spin(n)`: even, real, `g reverse(g) = 1`, and conjugation
/// preserves the span of vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinElement {
    element: CliffordElement,
}

impl SpinElement {
    const TOL: f64 = 1e-9;

    pub fn new(element: CliffordElement) -> Result<Self> {
        if !element.is_even(Self::TOL) {
            return Err(Error::invalid("spin element must be even"));
        }
        if element.terms().any(|(_, c)| c.im.abs() > Self::TOL) {
            return Err(Error::invalid("spin element must have real coefficients"));
        }
        let unit = &element * &element.reverse();
        let defect = unit.distance(&CliffordElement::scalar(element.dimension(), ONE));
        if defect > Self::TOL {
            return Err(Error::residual("spin unit condition", defect, Self::TOL));
        }
        let g = SpinElement { element };
        for i in 0..g.dimension() {
            let image = g.conjugate(&CliffordElement::generator(g.dimension(), i));
            let stray = (&image - &image.grade(1)).coefficient_norm();
            if stray > Self::TOL {
                return Err(Error::residual("adjoint action leaves vectors", stray, Self::TOL));
            }
        }
        Ok(g)
    }

    pub fn identity(dim: usize) -> Self {
        SpinElement {
            element: CliffordElement::scalar(dim, ONE),
        }
    }

    /// `cos(theta/2) + sin(theta/2) e_i e_j`, which projects to the rotation by
    /// `theta` in the oriented `(i, j)` plane.
    pub fn rotor(dim: usize, i: usize, j: usize, theta: f64) -> Self {
        assert!(i != j && i < dim && j < dim);
        let half = 0.5 * theta;
        let e = &CliffordElement::scalar(dim, C64::new(half.cos(), 0.0))
            + &CliffordElement::monomial(dim, &[i, j]).scale(C64::new(half.sin(), 0.0));
        SpinElement { element: e }
    }

    pub fn dimension(&self) -> usize {
        self.element.dimension()
    }

    pub fn element(&self) -> &CliffordElement {
        &self.element
    }

    pub fn inverse(&self) -> Self {
        SpinElement {
            element: self.element.reverse(),
        }
    }

    pub fn negated(&self) -> Self {
        SpinElement {
            element: -&self.element,
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        SpinElement {
            element: &self.element * &other.element,
        }
    }

    /// `g x g^{-1}`.
    pub fn conjugate(&self, x: &CliffordElement) -> CliffordElement {
        &(&self.element * x) * &self.element.reverse()
    }

    /// Sign `+1`/`-1` when this element is `+-1` within `tol`.
    pub fn central_sign(&self, tol: f64) -> Option<i8> {
        let one = CliffordElement::scalar(self.dimension(), ONE);
        if self.element.distance(&one) <= tol {
            Some(1)
        } else if self.element.distance(&-&one) <= tol {
            Some(-1)
        } else {
            None
        }
    }
}

/// Matrix of `v -> g v g^{-1}` on vectors: column `j` holds the image of `e_j`.
pub fn adjoint_projection(g: &SpinElement) -> RMatrix {
    let n = g.dimension();
    let mut out = RMatrix::zeros(n, n);
    for j in 0..n {
        let image = g.conjugate(&CliffordElement::generator(n, j));
        for i in 0..n {
            out[(i, j)] = image.coefficient(1 << i).re;
        }
    }
    out
}

fn check_special_orthogonal(g: &RMatrix, tol: f64) -> Result<()> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::invalid("rotation matrix must be square"));
    }
    let defect = linalg::max_abs_real(&(g.transpose() * g - RMatrix::identity(n, n)));
    if defect > tol {
        return Err(Error::residual("orthogonality", defect, tol));
    }
    let det = g.determinant();
    if (det - 1.0).abs() > tol.max(1e-8) {
        return Err(Error::invalid(format!("rotation has determinant {det}")));
    }
    Ok(())
}

/// One of the two lifts of `g in SO(n)`, fixed by making the largest
/// coefficient positive.
///
/// Solves the real linear system `x e_j = (sum_i g_ij e_i) x` over even `x`;
/// its solution space is one-dimensional.
pub fn lift_rotation(g: &RMatrix) -> Result<SpinElement> {
    check_special_orthogonal(g, 1e-9)?;
    let n = g.nrows();
    if !(2..=MAX_DIMENSION).contains(&n) {
        return Err(Error::invalid(format!("cannot lift rotations in dimension {n}")));
    }
    let even: Vec<Blade> = (0..(1u32 << n)).filter(|b| b.count_ones() % 2 == 0).collect();
    let odd: Vec<Blade> = (0..(1u32 << n)).filter(|b| b.count_ones() % 2 == 1).collect();
    let odd_index: BTreeMap<Blade, usize> = odd.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    let rows = n * odd.len();
    let mut m = RMatrix::zeros(rows.max(even.len()), even.len());
    for j in 0..n {
        let base = j * odd.len();
        for (col, &a) in even.iter().enumerate() {
            // x e_j term
            let ej: Blade = 1 << j;
            m[(base + odd_index[&(a ^ ej)], col)] += blade_product_sign(a, ej);
            // -(sum_i g_ij e_i) x term
            for i in 0..n {
                let gij = g[(i, j)];
                if gij != 0.0 {
                    let ei: Blade = 1 << i;
                    m[(base + odd_index[&(ei ^ a)], col)] -= gij * blade_product_sign(ei, a);
                }
            }
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[a].partial_cmp(&sigma[b]).unwrap());
    let smallest = order[0];
    if sigma[smallest] > 1e-8 || (order.len() > 1 && sigma[order[1]] < 1e-6) {
        return Err(Error::invalid("rotation does not determine a unique spin lift"));
    }
    let mut coeffs: Vec<f64> = (0..even.len()).map(|c| v_t[(smallest, c)]).collect();
    let norm = coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut lead = 0;
    for (k, c) in coeffs.iter().enumerate() {
        if c.abs() > coeffs[lead].abs() + 1e-12 {
            lead = k;
        }
    }
    let sign = if coeffs[lead] < 0.0 { -1.0 } else { 1.0 };
    for c in coeffs.iter_mut() {
        *c *= sign / norm;
    }
    let mut element = CliffordElement::zero(n);
    for (&b, &c) in even.iter().zip(&coeffs) {
        if c.abs() > 1e-15 {
            element.coeffs.insert(b, C64::new(c, 0.0));
        }
    }
    SpinElement::new(element)
}

/// Lift of `g` closest to `reference`.
///
/// Distances are measured in coefficient space, which is the spinor
/// representation's Frobenius norm up to the constant `2^{n/4}` because
/// blade images are unitary and trace-orthogonal.
pub fn nearest_lift(g: &RMatrix, reference: &SpinElement) -> Result<SpinElement> {
    if g.nrows() != reference.dimension() {
        return Err(Error::DimensionMismatch {
            expected: reference.dimension(),
            found: g.nrows(),
        });
    }
    let projected = adjoint_projection(reference);
    let distance = linalg::op_norm_real(&(g - projected));
    if distance >= LIFT_THRESHOLD {
        return Err(Error::LiftAmbiguity {
            distance,
            threshold: LIFT_THRESHOLD,
        });
    }
    let lift = lift_rotation(g)?;
    let flipped = lift.negated();
    if lift.element().distance(reference.element()) <= flipped.element().distance(reference.element()) {
        Ok(lift)
    } else {
        Ok(flipped)
    }
}

/// Propagates lifts along a sampled path of rotations starting from `start`.
pub fn propagate_lift(path: &[RMatrix], start: &SpinElement) -> Result<Vec<SpinElement>> {
    let mut lifts = Vec::with_capacity(path.len());
    let mut current = start.clone();
    for g in path {
        current = nearest_lift(g, &current)?;
        lifts.push(current.clone());
    }
    Ok(lifts)
}

/// `c(R) = -1/4 sum_{i,j} R_ij a_i a_j`, the element with
/// `[c(R), c(xi)] = c(R xi)` for every vector `xi`.
pub fn curvature_element(r: &RMatrix, actions: &[CMatrix]) -> Result<CMatrix> {
    let n = actions.len();
    if r.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: r.nrows(),
        });
    }
    let skew = linalg::max_abs_real(&(r + r.transpose()));
    if skew > 1e-12 {
        return Err(Error::residual("antisymmetry of R", skew, 1e-12));
    }
    let size = actions.first().map(|a| a.nrows()).unwrap_or(0);
    let mut out = CMatrix::zeros(size, size);
    for i in 0..n {
        for j in 0..n {
            if i != j && r[(i, j)] != 0.0 {
                out += &actions[i] * &actions[j] * C64::new(-0.25 * r[(i, j)], 0.0);
            }
        }
    }
    Ok(out)
}

/// `c(R)` in the spinor representation.
pub fn clifford_of_curvature(r: &RMatrix, rep: &SpinorRep) -> Result<CMatrix> {
    curvature_element(r, rep.generators())
}

/// `c(xi) = sum xi_i a_i`.
pub fn clifford_vector(xi: &[f64], actions: &[CMatrix]) -> CMatrix {
    let size = actions.first().map(|a| a.nrows()).unwrap_or(0);
    let mut out = CMatrix::zeros(size, size);
    for (x, a) in xi.iter().zip(actions) {
        out += a * C64::new(*x, 0.0);
    }
    out
}

/// A hermitian Clifford module fiber `E = E+ (+) E-`.
#[derive(Clone, Debug)]
pub struct CliffordModuleFiber {
    dim: usize,
    actions: Vec<CMatrix>,
    grading: CMatrix,
}

impl CliffordModuleFiber {
    const TOL: f64 = 1e-10;

    pub fn new(actions: Vec<CMatrix>, grading: CMatrix) -> Result<Self> {
        let n = actions.len();
        if n == 0 || n % 2 == 1 {
            return Err(Error::invalid(format!("Clifford module needs even n, got {n}")));
        }
        let d = grading.nrows();
        if grading.ncols() != d || actions.iter().any(|a| a.shape() != (d, d)) {
            return Err(Error::invalid("action and grading shapes disagree"));
        }
        let spinor = 1usize << (n / 2);
        if !d.is_multiple_of(spinor) {
            return Err(Error::invalid(format!(
                "fiber dimension {d} is not a multiple of 2^(n/2) = {spinor}"
            )));
        }
        let cliff = anticommutation_residual(&actions);
        if cliff > Self::TOL {
            return Err(Error::residual("Clifford relations", cliff, Self::TOL));
        }
        for a in &actions {
            let skew = max_abs(&(a + a.adjoint()));
            if skew > Self::TOL {
                return Err(Error::residual("skew-adjointness of the action", skew, Self::TOL));
            }
            let odd = max_abs(&linalg::anticommutator(a, &grading));
            if odd > Self::TOL {
                return Err(Error::residual("odd action", odd, Self::TOL));
            }
        }
        let inv = max_abs(&(&grading * &grading - linalg::identity(d)));
        let herm = max_abs(&(&grading - grading.adjoint()));
        if inv > Self::TOL || herm > Self::TOL {
            return Err(Error::residual("grading involution", inv.max(herm), Self::TOL));
        }
        Ok(CliffordModuleFiber {
            dim: n,
            actions,
            grading,
        })
    }

    /// `Sigma (x) C^r` with the Clifford action on the first factor.
    pub fn twisted_spinors(rep: &SpinorRep, rank: usize) -> Self {
        let id = linalg::identity(rank);
        CliffordModuleFiber {
            dim: rep.dimension(),
            actions: rep.generators().iter().map(|g| g.kronecker(&id)).collect(),
            grading: rep.chirality().kronecker(&id),
        }
    }

    /// `U E U^{-1}` for an invertible `U`.
    pub fn conjugated(&self, u: &CMatrix) -> Result<Self> {
        let inv = linalg::try_inverse(u).ok_or_else(|| Error::invalid("conjugator is singular"))?;
        Self::new(
            self.actions.iter().map(|a| u * a * &inv).collect(),
            u * &self.grading * &inv,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn fiber_dimension(&self) -> usize {
        self.grading.nrows()
    }

    pub fn actions(&self) -> &[CMatrix] {
        &self.actions
    }

    pub fn grading(&self) -> &CMatrix {
        &self.grading
    }

    /// Clifford chirality `i^{n/2} a_0 a_1 ... a_{n-1}` acting on the fiber.
    pub fn clifford_chirality(&self) -> CMatrix {
        let d = self.fiber_dimension();
        let mut acc = linalg::identity(d);
        for a in &self.actions {
            acc *= a;
        }
        acc * C64::new(0.0, 1.0).powu((self.dim / 2) as u32)
    }

    /// Largest commutator norm `max_i |[phi, a_i]|`.
    pub fn commutant_residual(&self, phi: &CMatrix) -> f64 {
        self.actions
            .iter()
            .map(|a| max_abs(&linalg::commutator(phi, a)))
            .fold(0.0, f64::max)
    }
}

/// `Str_{E/S}(phi) = 2^{-n/2} Str_E(gamma phi) = 2^{-n/2} tr(Gamma_E gamma phi)`,
/// with `gamma` the Clifford chirality acting on `E`.
///
/// `phi` has to commute with the action (relative tolerance `1e-10`).
pub fn relative_supertrace(phi: &CMatrix, fiber: &CliffordModuleFiber) -> Result<C64> {
    let d = fiber.fiber_dimension();
    if phi.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: phi.nrows(),
        });
    }
    let tol = 1e-10 * (1.0 + max_abs(phi));
    let residual = fiber.commutant_residual(phi);
    if residual > tol {
        return Err(Error::residual("phi does not commute with the Clifford action", residual, tol));
    }
    let weight = (fiber.dimension() / 2) as i32;
    let st = (fiber.grading() * fiber.clifford_chirality() * phi).trace();
    Ok(st * 2f64.powi(-weight))
}

/// Result of splitting a Clifford module fiber as `Sigma (x) W`.
#[derive(Clone, Debug)]
pub struct TwistingFactor {
    /// `rank W = D / 2^{n/2}`.
    pub rank: usize,
    /// Orthonormal basis `T_1..T_r` of `Hom_{C(V)}(Sigma, E)`, each `D x 2^{n/2}`.
    pub intertwiners: Vec<CMatrix>,
    /// The isomorphism `Sigma (x) C^r -> E`, `sigma (x) w_j -> T_j sigma`.
    pub assembly: CMatrix,
    assembly_inverse: CMatrix,
    spinor_dimension: usize,
}

impl TwistingFactor {
    /// `M (g_i (x) 1) M^{-1}` for each generator, to be compared with the
    /// fiber's actions.
    pub fn reassembled_actions(&self, rep: &SpinorRep) -> Vec<CMatrix> {
        let id = linalg::identity(self.rank);
        rep.generators()
            .iter()
            .map(|g| &self.assembly * g.kronecker(&id) * &self.assembly_inverse)
            .collect()
    }

    /// Largest deviation of the reassembled actions from the fiber's.
    pub fn reassembly_residual(&self, rep: &SpinorRep, fiber: &CliffordModuleFiber) -> f64 {
        self.reassembled_actions(rep)
            .iter()
            .zip(fiber.actions())
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }

    /// For `phi` in the commutant, the endomorphism `psi` of `W` with
    /// `M^{-1} phi M = 1 (x) psi`.
    pub fn twisting_part(&self, phi: &CMatrix) -> CMatrix {
        let local = &self.assembly_inverse * phi * &self.assembly;
        let r = self.rank;
        let s = self.spinor_dimension;
        let mut psi = CMatrix::zeros(r, r);
        for sigma in 0..s {
            for w in 0..r {
                for w2 in 0..r {
                    psi[(w, w2)] += local[(sigma * r + w, sigma * r + w2)];
                }
            }
        }
        psi / C64::new(s as f64, 0.0)
    }
}

/// Solves `T g_i = a_i T` for `D x 2^{n/2}` matrices `T` and returns a basis
/// of the solution space `Hom_{C(V)}(Sigma, E)`.
pub fn extract_twisting_factor(fiber: &CliffordModuleFiber, rep: &SpinorRep) -> Result<TwistingFactor> {
    if fiber.dimension() != rep.dimension() {
        return Err(Error::DimensionMismatch {
            expected: rep.dimension(),
            found: fiber.dimension(),
        });
    }
    let d = fiber.fiber_dimension();
    let s = rep.spinor_dimension();
    let unknowns = d * s;
    let n = rep.dimension();
    let id_d = linalg::identity(d);
    let id_s = linalg::identity(s);
    let mut system = CMatrix::zeros(n * unknowns, unknowns);
    for (i, (g, a)) in rep.generators().iter().zip(fiber.actions()).enumerate() {
        // vec(T g) - vec(a T) = (g^T (x) 1_D - 1_s (x) a) vec(T)
        let block = g.transpose().kronecker(&id_d) - id_s.kronecker(a);
        system
            .view_mut((i * unknowns, 0), (unknowns, unknowns))
            .copy_from(&block);
    }
    let kernel = linalg::null_space(&system, 1e-8);
    let expected = d / s;
    if kernel.ncols() != expected {
        return Err(Error::invalid(format!(
            "intertwiner space has dimension {}, expected {expected}: not a Clifford module",
            kernel.ncols()
        )));
    }
    let intertwiners: Vec<CMatrix> = (0..expected)
        .map(|j| {
            let col: Vec<C64> = kernel.column(j).iter().copied().collect();
            linalg::unvectorize(&col, d, s)
        })
        .collect();
    let mut assembly = CMatrix::zeros(d, s * expected);
    for (j, t) in intertwiners.iter().enumerate() {
        for sigma in 0..s {
            for row in 0..d {
                assembly[(row, sigma * expected + j)] = t[(row, sigma)];
            }
        }
    }
    let assembly_inverse = linalg::try_inverse(&assembly)
        .ok_or_else(|| Error::invalid("intertwiners do not assemble to an isomorphism"))?;
    Ok(TwistingFactor {
        rank: expected,
        intertwiners,
        assembly,
        assembly_inverse,
        spinor_dimension: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn rotation(n: usize, i: usize, j: usize, theta: f64) -> RMatrix {
        let mut g = RMatrix::identity(n, n);
        g[(i, i)] = theta.cos();
        g[(j, j)] = theta.cos();
        g[(i, j)] = -theta.sin();
        g[(j, i)] = theta.sin();
        g
    }

    #[test]
    fn generator_squares_to_minus_one() {
        let e1 = CliffordElement::generator(2, 0);
        assert_eq!(&e1 * &e1, CliffordElement::scalar(2, c(-1.0)));
    }

    #[test]
    fn orthogonal_generators_anticommute() {
        let e1 = CliffordElement::generator(2, 0);
        let e2 = CliffordElement::generator(2, 1);
        let s = &(&e1 * &e2) + &(&e2 * &e1);
        assert_eq!(s, CliffordElement::zero(2));
    }

    #[test]
    fn bivector_product_expands_by_hand() {
        let one = CliffordElement::scalar(2, c(1.0));
        let e12 = CliffordElement::monomial(2, &[0, 1]);
        let lhs = &(&one + &e12) * &(&one - &e12);
        assert_eq!(lhs, CliffordElement::scalar(2, c(2.0)));
    }

    #[test]
    fn multiply_rejects_dimension_mismatch() {
        let a = CliffordElement::generator(2, 0);
        let b = CliffordElement::generator(4, 0);
        assert!(matches!(a.multiply(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spinor_rep_rejects_bad_dimensions() {
        for n in [0, 1, 3, 10] {
            assert!(SpinorRep::new(n).is_err(), "n = {n}");
        }
    }

    #[test]
    fn spinor_rep_small_cases() {
        let r2 = SpinorRep::new(2).unwrap();
        assert_eq!(r2.generators()[0].shape(), (2, 2));
        assert_eq!(r2.span_rank(), 4);
        let g = r2.chirality();
        let g1 = &r2.generators()[0];
        assert!(max_abs(&linalg::anticommutator(g, g1)) == 0.0);
        let r4 = SpinorRep::new(4).unwrap();
        assert_eq!(r4.generators()[0].shape(), (4, 4));
        assert_eq!(r4.span_rank(), 16);
    }

    #[test]
    fn chirality_is_graded_involution() {
        for n in [2, 4, 6, 8] {
            let rep = SpinorRep::new(n).unwrap();
            let g = rep.chirality();
            let size = rep.spinor_dimension();
            assert!(max_abs(&(g * g - linalg::identity(size))) == 0.0);
            assert!(max_abs(&(g - g.adjoint())) == 0.0);
            assert_eq!(rep.chiral_indices(true).len(), size / 2);
            for gi in rep.generators() {
                assert!(max_abs(&(gi + gi.adjoint())) == 0.0);
                assert!(max_abs(&linalg::anticommutator(g, gi)) == 0.0);
            }
            assert_eq!(rep.anticommutation_residual(), 0.0);
        }
    }

    #[test]
    fn represent_identity_and_volume_element() {
        for n in [2, 4, 6] {
            let rep = SpinorRep::new(n).unwrap();
            let one = rep.represent(&CliffordElement::scalar(n, c(1.0))).unwrap();
            assert_eq!(one, linalg::identity(rep.spinor_dimension()));
            let all: Vec<usize> = (0..n).collect();
            let vol = CliffordElement::monomial(n, &all).scale(C64::new(0.0, 1.0).powu((n / 2) as u32));
            let img = rep.represent(&vol).unwrap();
            assert!(max_abs(&(img - rep.chirality())) < 1e-12);
        }
    }

    #[test]
    fn element_of_inverts_represent() {
        let rep = SpinorRep::new(4).unwrap();
        let x = &CliffordElement::monomial(4, &[0, 2, 3]).scale(C64::new(0.5, -1.0))
            + &CliffordElement::generator(4, 1);
        let back = rep.element_of(&rep.represent(&x).unwrap()).unwrap();
        assert!(back.distance(&x) < 1e-12);
    }

    #[test]
    fn adjoint_projection_of_rotor_is_rotation() {
        let theta = 0.73;
        let g = SpinElement::rotor(2, 0, 1, theta);
        let r = adjoint_projection(&g);
        assert!(linalg::max_abs_real(&(r - rotation(2, 0, 1, theta))) < 1e-14);
        let id = adjoint_projection(&SpinElement::identity(4));
        assert_eq!(id, RMatrix::identity(4, 4));
        let neg = adjoint_projection(&g.negated());
        assert!(linalg::max_abs_real(&(neg - adjoint_projection(&g))) < 1e-15);
    }

    #[test]
    fn spin_element_validation() {
        assert!(SpinElement::new(CliffordElement::generator(2, 0)).is_err());
        assert!(SpinElement::new(CliffordElement::scalar(2, c(2.0))).is_err());
        assert!(SpinElement::new(CliffordElement::scalar(2, C64::new(0.0, 1.0))).is_err());
        assert!(SpinElement::new(SpinElement::rotor(4, 1, 3, 1.1).element().clone()).is_ok());
    }

    #[test]
    fn lift_rotation_projects_back() {
        let g = rotation(4, 0, 2, 2.5) * rotation(4, 1, 3, -0.7);
        let lift = lift_rotation(&g).unwrap();
        assert!(linalg::max_abs_real(&(adjoint_projection(&lift) - g)) < 1e-10);
    }

    #[test]
    fn nearest_lift_of_projection_is_reference() {
        let reference = SpinElement::rotor(4, 0, 3, 2.9).compose(&SpinElement::rotor(4, 1, 2, -1.3));
        let lift = nearest_lift(&adjoint_projection(&reference), &reference).unwrap();
        assert!(lift.element().distance(reference.element()) < 1e-10);
    }

    #[test]
    fn nearest_lift_rejects_far_rotations() {
        let reference = SpinElement::identity(2);
        let err = nearest_lift(&rotation(2, 0, 1, 1.0), &reference).unwrap_err();
        assert!(matches!(err, Error::LiftAmbiguity { .. }));
    }

    #[test]
    fn loop_holonomy_distinguishes_two_pi_from_four_pi() {
        let steps = 64;
        let path = |turns: f64| -> Vec<RMatrix> {
            (1..=steps)
                .map(|k| rotation(2, 0, 1, turns * 2.0 * PI * k as f64 / steps as f64))
                .collect()
        };
        let start = SpinElement::identity(2);
        let once = propagate_lift(&path(1.0), &start).unwrap();
        assert_eq!(once.last().unwrap().central_sign(1e-10), Some(-1));
        // intermediate lifts follow cos(t/2) + sin(t/2) e1 e2
        let mid = &once[steps / 4 - 1];
        assert!(mid.element().distance(SpinElement::rotor(2, 0, 1, PI / 2.0).element()) < 1e-10);
        let twice: Vec<RMatrix> = (1..=2 * steps)
            .map(|k| rotation(2, 0, 1, 2.0 * PI * k as f64 / steps as f64))
            .collect();
        let lifts = propagate_lift(&twice, &start).unwrap();
        assert_eq!(lifts.last().unwrap().central_sign(1e-10), Some(1));
    }

    #[test]
    fn curvature_element_examples() {
        let rep = SpinorRep::new(2).unwrap();
        let zero = clifford_of_curvature(&RMatrix::zeros(2, 2), &rep).unwrap();
        assert_eq!(zero, CMatrix::zeros(2, 2));
        let r = 0.8;
        let big_r = RMatrix::from_row_slice(2, 2, &[0.0, r, -r, 0.0]);
        let cr = clifford_of_curvature(&big_r, &rep).unwrap();
        let g = rep.generators();
        let expected = &g[0] * &g[1] * c(-r / 2.0);
        assert!(max_abs(&(cr - expected)) < 1e-15);
        let not_skew = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(clifford_of_curvature(&not_skew, &rep).is_err());
    }

    #[test]
    fn curvature_commutator_identity() {
        let rep = SpinorRep::new(4).unwrap();
        let r = RMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) as f64).sin() - ((j * 7 + i * 3) as f64).sin());
        let xi = [0.3, -1.2, 0.5, 2.0];
        let cr = clifford_of_curvature(&r, &rep).unwrap();
        let cxi = clifford_vector(&xi, rep.generators());
        let rxi: Vec<f64> = (0..4).map(|i| (0..4).map(|j| r[(i, j)] * xi[j]).sum()).collect();
        let lhs = linalg::commutator(&cr, &cxi);
        assert!(max_abs(&(lhs - clifford_vector(&rxi, rep.generators()))) < 1e-12);
    }

    #[test]
    fn relative_supertrace_examples() {
        let rep = SpinorRep::new(4).unwrap();
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 3);
        let id = linalg::identity(12);
        let st = relative_supertrace(&id, &fiber).unwrap();
        assert!((st - c(3.0)).norm() < 1e-12);
        assert_eq!(relative_supertrace(&CMatrix::zeros(12, 12), &fiber).unwrap(), c(0.0));
        let psi = CMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 1.0),
                c(0.4),
                C64::new(0.0, -0.3),
                c(-1.0),
                C64::new(1.0, 0.5),
                c(0.0),
                c(0.2),
                c(0.1),
                C64::new(2.0, 0.5),
            ],
        );
        let phi = linalg::identity(4).kronecker(&psi);
        let st = relative_supertrace(&phi, &fiber).unwrap();
        assert!((st - C64::new(5.0, 2.0)).norm() < 1e-12);
        // not in the commutant
        let bad = rep.generators()[0].kronecker(&linalg::identity(3));
        assert!(relative_supertrace(&bad, &fiber).is_err());
    }

    #[test]
    fn fiber_validation_catches_malformed_actions() {
        let rep = SpinorRep::new(2).unwrap();
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 1);
        let mut actions = fiber.actions().to_vec();
        actions[1] = actions[0].clone();
        assert!(CliffordModuleFiber::new(actions, fiber.grading().clone()).is_err());
        // dimension not divisible by 2^{n/2}
        let a = CMatrix::from_element(1, 1, C64::new(0.0, 1.0));
        assert!(CliffordModuleFiber::new(vec![a.clone(), a], CMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn twisting_factor_of_tensor_construction() {
        let rep = SpinorRep::new(2).unwrap();
        let fiber = CliffordModuleFiber::twisted_spinors(&rep, 2);
        let tf = extract_twisting_factor(&fiber, &rep).unwrap();
        assert_eq!(tf.rank, 2);
        assert!(tf.reassembly_residual(&rep, &fiber) < 1e-10);
        // each intertwiner is a slot injection sigma -> sigma (x) w up to a change of basis of W
        let irreducible = CliffordModuleFiber::twisted_spinors(&rep, 1);
        assert_eq!(extract_twisting_factor(&irreducible, &rep).unwrap().rank, 1);
    }
}
