//! Finite Čech cohomology on nerves of good covers.
//!
//! Cochains take values in `Z` or in `Z_k`, written additively as integers in
//! `0..k`. Everything is exact: coboundary matrices are integer matrices and
//! cohomology is read off Smith normal forms computed with overflow-checked
//! `i128` arithmetic.
//!
//! Simplices are strictly increasing vertex tuples, and the `i`-th face of a
//! simplex drops its `i`-th vertex, so `(δc)(σ) = Σ_i (-1)^i c(∂_i σ)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_integer::Integer;

use crate::{Error, Result};

/// Highest simplex degree kept in a nerve.
pub const MAX_DEGREE: usize = 3;

/// Coefficient ring of a cochain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ring {
    Integers,
    /// `Z_k` with `k >= 2`.
    Mod(u64),
}

impl Ring {
    pub fn modulus(self) -> Option<u64> {
        match self {
            Ring::Integers => None,
            Ring::Mod(k) => Some(k),
        }
    }

    /// Parses the `ring` field of the text formats: `0` is `Z`, `k >= 2` is `Z_k`.
    pub fn from_modulus(k: u64) -> Result<Self> {
        match k {
            0 => Ok(Ring::Integers),
            1 => Err(Error::invalid("Z_1 is the zero ring")),
            k => Ok(Ring::Mod(k)),
        }
    }

    fn reduce(self, v: i128) -> i128 {
        match self {
            Ring::Integers => v,
            Ring::Mod(k) => v.rem_euclid(k as i128),
        }
    }

    fn check(self) -> Result<()> {
        match self {
            Ring::Mod(k) if k < 2 => Err(Error::invalid(format!("invalid modulus {k}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Ring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ring::Integers => write!(f, "Z"),
            Ring::Mod(k) => write!(f, "Z_{k}"),
        }
    }
}

/// Simplicial complex recording the nonempty intersections of a cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nerve {
    vertex_count: usize,
    simplices: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
}

impl Nerve {
    /// Face closure of the given simplices. Each simplex is sorted; repeated
    /// vertices, vertices `>= vertex_count` and simplices above degree 3 are
    /// rejected. Every vertex `0..vertex_count` is a 0-simplex.
    pub fn new(vertex_count: usize, simplices: &[Vec<usize>]) -> Result<Self> {
        let mut sets: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); MAX_DEGREE + 1];
        for v in 0..vertex_count {
            sets[0].insert(vec![v]);
        }
        for s in simplices {
            let mut s = s.clone();
            s.sort_unstable();
            if s.is_empty() {
                return Err(Error::invalid("empty simplex"));
            }
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("simplex {s:?} repeats a vertex")));
            }
            if s.len() > MAX_DEGREE + 1 {
                return Err(Error::invalid(format!(
                    "simplex {s:?} exceeds the maximal degree {MAX_DEGREE}"
                )));
            }
            if let Some(&v) = s.iter().find(|&&v| v >= vertex_count) {
                return Err(Error::invalid(format!(
                    "vertex {v} out of range for {vertex_count} vertices"
                )));
            }
            // all nonempty subsets
            let len = s.len();
            for mask in 1u32..(1 << len) {
                let face: Vec<usize> = (0..len).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect();
                sets[face.len() - 1].insert(face);
            }
        }
        Ok(Self::from_sets(vertex_count, sets))
    }

    /// Builds a nerve from maximal simplices, inferring the vertex count.
    pub fn from_simplices(simplices: &[Vec<usize>]) -> Result<Self> {
        let count = simplices.iter().flatten().max().map(|m| m + 1).unwrap_or(0);
        Self::new(count, simplices)
    }

    fn from_sets(vertex_count: usize, sets: Vec<BTreeSet<Vec<usize>>>) -> Self {
        let simplices: Vec<Vec<Vec<usize>>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let index = simplices
            .iter()
            .map(|list| list.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        Nerve {
            vertex_count,
            simplices,
            index,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Sorted `q`-simplices; empty above degree 3.
    pub fn simplices(&self, q: usize) -> &[Vec<usize>] {
        self.simplices.get(q).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn count(&self, q: usize) -> usize {
        self.simplices(q).len()
    }

    /// Position of a simplex among those of its degree (vertices in any order).
    pub fn index_of(&self, simplex: &[usize]) -> Option<usize> {
        let mut s = simplex.to_vec();
        s.sort_unstable();
        let q = s.len().checked_sub(1)?;
        self.index.get(q)?.get(&s).copied()
    }

    /// Highest degree with at least one simplex.
    pub fn dimension(&self) -> usize {
        (0..=MAX_DEGREE).rev().find(|&q| self.count(q) > 0).unwrap_or(0)
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=MAX_DEGREE)
            .map(|q| if q % 2 == 0 { self.count(q) as i64 } else { -(self.count(q) as i64) })
            .sum()
    }

    /// The same complex with vertex `v` renamed to `perm[v]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.vertex_count {
            return Err(Error::DimensionMismatch {
                expected: self.vertex_count,
                found: perm.len(),
            });
        }
        let top: Vec<Vec<usize>> = (0..=MAX_DEGREE)
            .flat_map(|q| self.simplices(q).iter())
            .map(|s| s.iter().map(|&v| perm[v]).collect())
            .collect();
        let n = Self::new(self.vertex_count, &top)?;
        if (0..=MAX_DEGREE).any(|q| n.count(q) != self.count(q)) {
            return Err(Error::invalid("relabeling is not a permutation"));
        }
        Ok(n)
    }

    /// Integer matrix of `δ_q: C^q -> C^{q+1}` (rows: `(q+1)`-simplices).
    pub fn coboundary_matrix(&self, q: usize) -> IntMatrix {
        let rows = self.count(q + 1);
        let cols = self.count(q);
        let mut m = IntMatrix::zeros(rows, cols);
        for (r, s) in self.simplices(q + 1).iter().enumerate() {
            for i in 0..s.len() {
                let mut face = s.clone();
                face.remove(i);
                let c = self.index[q][&face];
                m.set(r, c, if i % 2 == 0 { 1 } else { -1 });
            }
        }
        m
    }

    /// Number of connected components (union-find over edges).
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertex_count).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for e in self.simplices(1) {
            let a = find(&mut parent, e[0]);
            let b = find(&mut parent, e[1]);
            parent[a] = b;
        }
        (0..self.vertex_count).filter(|&v| find(&mut parent, v) == v).count()
    }
}

/// A `q`-cochain: one value per `q`-simplex of a nerve, in nerve order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cochain {
    degree: usize,
    ring: Ring,
    values: Vec<i64>,
}

impl Cochain {
    /// Values are reduced into `0..k` for `Z_k`.
    pub fn new(degree: usize, ring: Ring, values: Vec<i64>) -> Result<Self> {
        ring.check()?;
        let values = values.into_iter().map(|v| ring.reduce(v as i128) as i64).collect();
        Ok(Cochain { degree, ring, values })
    }

    pub fn zero(nerve: &Nerve, degree: usize, ring: Ring) -> Self {
        Cochain {
            degree,
            ring,
            values: vec![0; nerve.count(degree)],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Value on a simplex given by its vertices.
    pub fn value_at(&self, nerve: &Nerve, simplex: &[usize]) -> Option<i64> {
        if simplex.len() != self.degree + 1 {
            return None;
        }
        nerve.index_of(simplex).map(|i| self.values[i])
    }

    /// Sum in the common ring.
    pub fn add(&self, other: &Cochain) -> Result<Cochain> {
        if self.degree != other.degree || self.ring != other.ring || self.values.len() != other.values.len() {
            return Err(Error::invalid("cochains differ in degree, ring or length"));
        }
        Cochain::new(
            self.degree,
            self.ring,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        )
    }

    /// Same values read in another ring (reduced when the target is `Z_k`).
    pub fn in_ring(&self, ring: Ring) -> Result<Cochain> {
        Cochain::new(self.degree, ring, self.values.clone())
    }

    fn check(&self, nerve: &Nerve) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("cochain degree {} above {MAX_DEGREE}", self.degree)));
        }
        if self.values.len() != nerve.count(self.degree) {
            return Err(Error::DimensionMismatch {
                expected: nerve.count(self.degree),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Cyclic decomposition of a cohomology group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CohomologyResult {
    pub degree: usize,
    pub ring: Ring,
    /// Orders of the cyclic factors; `0` stands for an infinite cyclic factor.
    /// Trivial factors are omitted.
    pub factors: Vec<u64>,
    /// One representative cocycle per factor, in the same order.
    pub generators: Vec<Cochain>,
}

impl CohomologyResult {
    pub fn is_trivial(&self) -> bool {
        self.factors.is_empty()
    }

    /// Rank of the free part.
    pub fn free_rank(&self) -> usize {
        self.factors.iter().filter(|&&f| f == 0).count()
    }

    /// Finite factor orders.
    pub fn torsion(&self) -> Vec<u64> {
        self.factors.iter().copied().filter(|&f| f != 0).collect()
    }
}

impl fmt::Display for CohomologyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|&d| if d == 0 { "Z".to_string() } else { format!("Z_{d}") })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// `δc`; defined for `q <= 2`.
pub fn coboundary(c: &Cochain, nerve: &Nerve) -> Result<Cochain> {
    c.check(nerve)?;
    if c.degree >= MAX_DEGREE {
        return Err(Error::invalid(format!(
            "coboundary of a degree-{} cochain leaves the nerve",
            c.degree
        )));
    }
    let m = nerve.coboundary_matrix(c.degree);
    let x: Vec<i128> = c.values.iter().map(|&v| v as i128).collect();
    let y = m.apply(&x)?;
    Cochain::new(
        c.degree + 1,
        c.ring,
        y.into_iter().map(|v| c.ring.reduce(v) as i64).collect(),
    )
}

/// Whether `δc = 0`. Degree-3 cochains are always cocycles here.
pub fn is_cocycle(c: &Cochain, nerve: &Nerve) -> Result<bool> {
    c.check(nerve)?;
    if c.degree >= MAX_DEGREE {
        return Ok(true);
    }
    Ok(coboundary(c, nerve)?.is_zero())
}

/// A cochain `b` with `δb = c` over `c`'s ring, or `None` if `c` is not a
/// coboundary. Rejects non-cocycles.
pub fn solve_coboundary(c: &Cochain, nerve: &Nerve) -> Result<Option<Cochain>> {
    c.check(nerve)?;
    if !is_cocycle(c, nerve)? {
        let nonzero = coboundary(c, nerve)?.values.iter().filter(|&&v| v != 0).count();
        return Err(Error::NotCocycle { nonzero });
    }
    if c.degree == 0 {
        return Ok(if c.is_zero() { Some(Cochain::new(0, c.ring, vec![])?) } else { None });
    }
    let q = c.degree - 1;
    let a = nerve.coboundary_matrix(q);
    let target: Vec<i128> = c.values.iter().map(|&v| v as i128).collect();
    let solution = match c.ring {
        Ring::Integers => solve_integer(&a, &target)?,
        Ring::Mod(k) => {
            // [A | kI] (x, y) = c over Z
            let (rows, cols) = (a.rows, a.cols);
            let mut aug = IntMatrix::zeros(rows, cols + rows);
            for r in 0..rows {
                for col in 0..cols {
                    aug.set(r, col, a.get(r, col));
                }
                aug.set(r, cols + r, k as i128);
            }
            solve_integer(&aug, &target)?.map(|x| x[..cols].to_vec())
        }
    };
    let Some(x) = solution else {
        return Ok(None);
    };
    let values = x
        .iter()
        .map(|&v| i64::try_from(c.ring.reduce(v)).map_err(|_| Error::Overflow))
        .collect::<Result<Vec<_>>>()?;
    let b = Cochain::new(q, c.ring, values)?;
    let check = coboundary(&b, nerve)?;
    if check != *c {
        return Err(Error::invalid("coboundary solution failed re-verification"));
    }
    Ok(Some(b))
}

/// Output of [`bockstein`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BocksteinResult {
    /// Integral degree-3 cocycle `δ(lift c) / k`.
    pub beta: Cochain,
    /// Whether `[beta] = 0` in `H^3(nerve; Z)`.
    pub trivial: bool,
}

/// Bockstein of `0 -> Z -> Z -> Z_k -> 0` applied to a `Z_k` 2-cocycle.
pub fn bockstein(c: &Cochain, nerve: &Nerve) -> Result<BocksteinResult> {
    c.check(nerve)?;
    let Ring::Mod(k) = c.ring else {
        return Err(Error::invalid("bockstein needs a Z_k cochain"));
    };
    if c.degree != 2 {
        return Err(Error::invalid("bockstein is defined here on degree-2 cochains"));
    }
    if !is_cocycle(c, nerve)? {
        let nonzero = coboundary(c, nerve)?.values.iter().filter(|&&v| v != 0).count();
        return Err(Error::NotCocycle { nonzero });
    }
    let lift: Vec<i128> = c.values.iter().map(|&v| v as i128).collect();
    let d = nerve.coboundary_matrix(2).apply(&lift)?;
    let mut beta = Vec::with_capacity(d.len());
    for v in d {
        if v % k as i128 != 0 {
            return Err(Error::invalid("δ of the lift is not divisible by k"));
        }
        beta.push(i64::try_from(v / k as i128).map_err(|_| Error::Overflow)?);
    }
    let beta = Cochain::new(3, Ring::Integers, beta)?;
    let trivial = solve_coboundary(&beta, nerve)?.is_some();
    Ok(BocksteinResult { beta, trivial })
}

/// `H^q(nerve; ring)` for `q <= 3`.
pub fn cohomology(nerve: &Nerve, ring: Ring, q: usize) -> Result<CohomologyResult> {
    ring.check()?;
    if q > MAX_DEGREE {
        return Err(Error::invalid(format!("degree {q} above {MAX_DEGREE}")));
    }
    match ring {
        Ring::Integers => integral_cohomology(nerve, q),
        Ring::Mod(k) => modular_cohomology(nerve, q, k),
    }
}

struct IntegralPiece {
    result: CohomologyResult,
}

fn integral_cohomology(nerve: &Nerve, q: usize) -> Result<CohomologyResult> {
    Ok(integral_piece(nerve, q)?.result)
}

fn integral_piece(nerve: &Nerve, q: usize) -> Result<IntegralPiece> {
    let n = nerve.count(q);
    let a = nerve.coboundary_matrix(q);
    let snf = smith_normal_form(&a)?;
    let r = snf.rank();
    // kernel of δ_q: the last n - r columns of R
    let kernel_dim = n - r;
    let z = snf.r.columns(r, n);
    let prev = if q == 0 {
        IntMatrix::zeros(n, 0)
    } else {
        nerve.coboundary_matrix(q - 1)
    };
    // coordinates of im δ_{q-1} in the kernel basis
    let x = snf.r_inv.mul(&prev)?.rows_range(r, n);
    let snf_x = smith_normal_form(&x)?;
    let gens = z.mul(&snf_x.l_inv)?;
    let mut factors = Vec::new();
    let mut generators = Vec::new();
    for i in 0..kernel_dim {
        let order = if i < snf_x.rank() { snf_x.diagonal[i] } else { 0 };
        if order == 1 {
            continue;
        }
        factors.push(u64::try_from(order).map_err(|_| Error::Overflow)?);
        let mut vals = Vec::with_capacity(n);
        for row in 0..n {
            let v = gens.get(row, i);
            // representatives of torsion classes are only defined mod image
            vals.push(i64::try_from(v).map_err(|_| Error::Overflow)?);
        }
        generators.push(Cochain::new(q, Ring::Integers, vals)?);
    }
    Ok(IntegralPiece {
        result: CohomologyResult {
            degree: q,
            ring: Ring::Integers,
            factors,
            generators,
        },
    })
}

fn modular_cohomology(nerve: &Nerve, q: usize, k: u64) -> Result<CohomologyResult> {
    let ring = Ring::Mod(k);
    let here = integral_piece(nerve, q)?.result;
    let mut factors = Vec::new();
    let mut generators = Vec::new();
    // H^q(Z) (x) Z_k
    for (&d, g) in here.factors.iter().zip(&here.generators) {
        let order = if d == 0 { k } else { d.gcd(&k) };
        if order > 1 {
            factors.push(order);
            generators.push(g.in_ring(ring)?);
        }
    }
    // Tor(H^{q+1}(Z), Z_k)
    if q < MAX_DEGREE {
        let next = integral_piece(nerve, q + 1)?.result;
        let a = nerve.coboundary_matrix(q);
        for (&d, y) in next.factors.iter().zip(&next.generators) {
            if d == 0 {
                continue;
            }
            let g = d.gcd(&k);
            if g == 1 {
                continue;
            }
            // d y = δx for an integral x; (k/g) x is then a Z_k cocycle
            let target: Vec<i128> = y.values.iter().map(|&v| v as i128 * d as i128).collect();
            let x = solve_integer(&a, &target)?
                .ok_or_else(|| Error::invalid("torsion generator is not torsion"))?;
            let scale = (k / g) as i128;
            let vals = x
                .iter()
                .map(|&v| {
                    v.checked_mul(scale)
                        .map(|w| ring.reduce(w) as i64)
                        .ok_or(Error::Overflow)
                })
                .collect::<Result<Vec<_>>>()?;
            factors.push(g);
            generators.push(Cochain::new(q, ring, vals)?);
        }
    }
    Ok(CohomologyResult {
        degree: q,
        ring,
        factors,
        generators,
    })
}

/// Dense integer matrix (row-major) for exact elimination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i128>]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i128 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i128) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b != 0 {
                        let prod = a.checked_mul(b).ok_or(Error::Overflow)?;
                        let cur = out.get(i, j).checked_add(prod).ok_or(Error::Overflow)?;
                        out.set(i, j, cur);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, x: &[i128]) -> Result<Vec<i128>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut out = vec![0i128; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, &xj) in x.iter().enumerate() {
                let a = self.get(i, j);
                if a != 0 && xj != 0 {
                    *o = o
                        .checked_add(a.checked_mul(xj).ok_or(Error::Overflow)?)
                        .ok_or(Error::Overflow)?;
                }
            }
        }
        Ok(out)
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> IntMatrix {
        let mut out = IntMatrix::zeros(self.rows, end - start);
        for r in 0..self.rows {
            for c in start..end {
                out.set(r, c - start, self.get(r, c));
            }
        }
        out
    }

    /// Rows `start..end`.
    pub fn rows_range(&self, start: usize, end: usize) -> IntMatrix {
        IntMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for c in 0..self.cols {
                self.data.swap(a * self.cols + c, b * self.cols + c);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for r in 0..self.rows {
                self.data.swap(r * self.cols + a, r * self.cols + b);
            }
        }
    }

    /// `row[target] += f * row[source]`.
    fn add_row(&mut self, target: usize, source: usize, f: i128) -> Result<()> {
        if f == 0 {
            return Ok(());
        }
        for c in 0..self.cols {
            let s = self.get(source, c);
            if s != 0 {
                let v = self
                    .get(target, c)
                    .checked_add(s.checked_mul(f).ok_or(Error::Overflow)?)
                    .ok_or(Error::Overflow)?;
                self.set(target, c, v);
            }
        }
        Ok(())
    }

    /// `col[target] += f * col[source]`.
    fn add_col(&mut self, target: usize, source: usize, f: i128) -> Result<()> {
        if f == 0 {
            return Ok(());
        }
        for r in 0..self.rows {
            let s = self.get(r, source);
            if s != 0 {
                let v = self
                    .get(r, target)
                    .checked_add(s.checked_mul(f).ok_or(Error::Overflow)?)
                    .ok_or(Error::Overflow)?;
                self.set(r, target, v);
            }
        }
        Ok(())
    }
}

/// `L A R = D` with `L`, `R` unimodular and `D` diagonal with
/// `d_1 | d_2 | ... | d_rank`, all positive.
#[derive(Clone, Debug)]
pub struct SmithForm {
    pub diagonal: Vec<i128>,
    pub l: IntMatrix,
    pub l_inv: IntMatrix,
    pub r: IntMatrix,
    pub r_inv: IntMatrix,
}

impl SmithForm {
    pub fn rank(&self) -> usize {
        self.diagonal.len()
    }
}

/// Smith normal form with exact, overflow-checked arithmetic.
pub fn smith_normal_form(a: &IntMatrix) -> Result<SmithForm> {
    let (m, n) = (a.rows, a.cols);
    let mut d = a.clone();
    let mut l = IntMatrix::identity(m);
    let mut l_inv = IntMatrix::identity(m);
    let mut r = IntMatrix::identity(n);
    let mut r_inv = IntMatrix::identity(n);

    // elementary operations, mirrored on the transforms
    macro_rules! row_swap {
        ($i:expr, $j:expr) => {{
            d.swap_rows($i, $j);
            l.swap_rows($i, $j);
            l_inv.swap_cols($i, $j);
        }};
    }
    macro_rules! col_swap {
        ($i:expr, $j:expr) => {{
            d.swap_cols($i, $j);
            r.swap_cols($i, $j);
            r_inv.swap_rows($i, $j);
        }};
    }
    // row_i -= q row_t
    macro_rules! row_sub {
        ($i:expr, $t:expr, $q:expr) => {{
            d.add_row($i, $t, -$q)?;
            l.add_row($i, $t, -$q)?;
            l_inv.add_col($t, $i, $q)?;
        }};
    }
    // col_j -= q col_t
    macro_rules! col_sub {
        ($j:expr, $t:expr, $q:expr) => {{
            d.add_col($j, $t, -$q)?;
            r.add_col($j, $t, -$q)?;
            r_inv.add_row($t, $j, $q)?;
        }};
    }

    let mut diagonal = Vec::new();
    let mut t = 0;
    while t < m.min(n) {
        // smallest nonzero entry of the trailing block as pivot
        let mut best: Option<(usize, usize)> = None;
        for i in t..m {
            for j in t..n {
                let v = d.get(i, j).abs();
                if v != 0 && best.is_none_or(|(bi, bj)| v < d.get(bi, bj).abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else {
            break;
        };
        row_swap!(t, pi);
        col_swap!(t, pj);
        loop {
            let mut changed = false;
            let p = d.get(t, t);
            for i in (t + 1)..m {
                let v = d.get(i, t);
                if v != 0 {
                    let q = Integer::div_floor(&v, &p);
                    row_sub!(i, t, q);
                    if d.get(i, t) != 0 {
                        changed = true;
                    }
                }
            }
            for j in (t + 1)..n {
                let v = d.get(t, j);
                if v != 0 {
                    let q = Integer::div_floor(&v, &p);
                    col_sub!(j, t, q);
                    if d.get(t, j) != 0 {
                        changed = true;
                    }
                }
            }
            if changed {
                // move a smaller remainder into the pivot position
                let mut best = (t, t);
                for i in t..m {
                    let v = d.get(i, t).abs();
                    if v != 0 && v < d.get(best.0, best.1).abs() {
                        best = (i, t);
                    }
                }
                for j in t..n {
                    let v = d.get(t, j).abs();
                    if v != 0 && v < d.get(best.0, best.1).abs() {
                        best = (t, j);
                    }
                }
                row_swap!(t, best.0);
                col_swap!(t, best.1);
                continue;
            }
            // pivot must divide the whole trailing block
            let p = d.get(t, t);
            let mut offender = None;
            'scan: for i in (t + 1)..m {
                for j in (t + 1)..n {
                    if d.get(i, j) % p != 0 {
                        offender = Some(i);
                        break 'scan;
                    }
                }
            }
            match offender {
                Some(i) => {
                    // row_t += row_i, then eliminate again
                    d.add_row(t, i, 1)?;
                    l.add_row(t, i, 1)?;
                    l_inv.add_col(i, t, -1)?;
                }
                None => break,
            }
        }
        if d.get(t, t) < 0 {
            for c in 0..n {
                d.set(t, c, -d.get(t, c));
            }
            for c in 0..m {
                l.set(t, c, -l.get(t, c));
            }
            for rr in 0..m {
                l_inv.set(rr, t, -l_inv.get(rr, t));
            }
        }
        diagonal.push(d.get(t, t));
        t += 1;
    }
    Ok(SmithForm {
        diagonal,
        l,
        l_inv,
        r,
        r_inv,
    })
}

/// Some integer solution of `A x = b`, if one exists.
pub fn solve_integer(a: &IntMatrix, b: &[i128]) -> Result<Option<Vec<i128>>> {
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: b.len(),
        });
    }
    let snf = smith_normal_form(a)?;
    let lb = snf.l.apply(b)?;
    let mut y = vec![0i128; a.cols];
    for (i, &v) in lb.iter().enumerate() {
        if i < snf.rank() {
            let di = snf.diagonal[i];
            if v % di != 0 {
                return Ok(None);
            }
            y[i] = v / di;
        } else if v != 0 {
            return Ok(None);
        }
    }
    Ok(Some(snf.r.apply(&y)?))
}

/// Boundary of the tetrahedron: the four-chart good cover of `S^2`.
pub fn tetrahedron_boundary() -> Nerve {
    Nerve::new(4, &[vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]])
        .expect("static complex")
}

/// Minimal six-vertex triangulation of `RP^2` (ten triangles).
pub fn minimal_rp2() -> Nerve {
    const TRIANGLES: [[usize; 3]; 10] = [
        [1, 2, 3],
        [1, 3, 4],
        [1, 4, 5],
        [1, 5, 6],
        [1, 6, 2],
        [2, 3, 5],
        [3, 4, 6],
        [4, 5, 2],
        [5, 6, 3],
        [6, 2, 4],
    ];
    let t: Vec<Vec<usize>> = TRIANGLES.iter().map(|t| t.iter().map(|v| v - 1).collect()).collect();
    Nerve::new(6, &t).expect("static complex")
}

/// Seven-vertex (Möbius) triangulation of the torus.
pub fn seven_vertex_torus() -> Nerve {
    let mut t = Vec::new();
    for i in 0..7 {
        t.push(vec![i, (i + 1) % 7, (i + 3) % 7]);
        t.push(vec![i, (i + 2) % 7, (i + 3) % 7]);
    }
    Nerve::new(7, &t).expect("static complex")
}

/// Triangles of the mod-`k` Moore space (generalized dunce hat): a disk whose
/// boundary wraps `k` times around a triangle.
///
/// Vertices: circle `0..3`, inner ring `3..3+3k`, center `3+3k`.
pub fn moore_space_triangles(k: usize) -> (usize, Vec<Vec<usize>>) {
    assert!(k >= 2);
    let ring = 3 * k;
    let circle = |i: usize| i % 3;
    let inner = |i: usize| 3 + (i % ring);
    let center = 3 + ring;
    let mut t = Vec::new();
    for i in 0..ring {
        t.push(vec![circle(i), circle(i + 1), inner(i)]);
        t.push(vec![circle(i + 1), inner(i + 1), inner(i)]);
        t.push(vec![inner(i), inner(i + 1), center]);
    }
    (center + 1, t)
}

/// Suspension of the mod-`k` Moore space: a 3-complex with
/// `H^3(Z) = Z_k` and `H^2(Z) = 0`, whose `Z_k` 2-class has nontrivial
/// Bockstein. Plays the role of a lens space in the cohomology sense.
pub fn suspended_moore_space(k: usize) -> Nerve {
    let (count, tri) = moore_space_triangles(k);
    let (north, south) = (count, count + 1);
    let mut tets = Vec::with_capacity(2 * tri.len());
    for t in &tri {
        for apex in [north, south] {
            let mut s = t.clone();
            s.push(apex);
            tets.push(s);
        }
    }
    Nerve::new(count + 2, &tets).expect("static complex")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rank over GF(p) by Gaussian elimination.
    fn rank_mod_p(a: &IntMatrix, p: i128) -> usize {
        let mut m: Vec<Vec<i128>> = (0..a.rows())
            .map(|r| (0..a.cols()).map(|c| a.get(r, c).rem_euclid(p)).collect())
            .collect();
        let mut rank = 0;
        for col in 0..a.cols() {
            let Some(piv) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
                continue;
            };
            m.swap(rank, piv);
            let inv = (1..p).find(|x| x * m[rank][col] % p == 1).unwrap();
            for c in 0..a.cols() {
                m[rank][c] = m[rank][c] * inv % p;
            }
            for r in 0..m.len() {
                if r != rank && m[r][col] != 0 {
                    let f = m[r][col];
                    for c in 0..a.cols() {
                        m[r][c] = (m[r][c] - f * m[rank][c]).rem_euclid(p);
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn betti_mod_p(n: &Nerve, q: usize, p: i128) -> usize {
        let up = rank_mod_p(&n.coboundary_matrix(q), p);
        let down = if q == 0 { 0 } else { rank_mod_p(&n.coboundary_matrix(q - 1), p) };
        n.count(q) - up - down
    }

    #[test]
    fn coboundary_of_zero_and_of_functions() {
        let n = Nerve::new(3, &[vec![0, 1, 2]]).unwrap();
        let z = Cochain::zero(&n, 1, Ring::Integers);
        assert!(coboundary(&z, &n).unwrap().is_zero());
        let f = Cochain::new(0, Ring::Integers, vec![5, 7, 11]).unwrap();
        let df = coboundary(&f, &n).unwrap();
        for (e, v) in n.simplices(1).iter().zip(df.values()) {
            let fv = f.values();
            assert_eq!(*v, fv[e[1]] - fv[e[0]]);
        }
    }

    #[test]
    fn nerve_closure_and_validation() {
        let n = tetrahedron_boundary();
        assert_eq!((n.count(0), n.count(1), n.count(2), n.count(3)), (4, 6, 4, 0));
        assert_eq!(n.euler_characteristic(), 2);
        assert!(Nerve::new(3, &[vec![0, 0, 1]]).is_err());
        assert!(Nerve::new(2, &[vec![0, 2]]).is_err());
        assert!(Nerve::new(5, &[vec![0, 1, 2, 3, 4]]).is_err());
    }

    #[test]
    fn rp2_is_a_closed_pseudomanifold() {
        let n = minimal_rp2();
        assert_eq!(n.euler_characteristic(), 1);
        for e in n.simplices(1) {
            let cofaces = n.simplices(2).iter().filter(|t| e.iter().all(|v| t.contains(v))).count();
            assert_eq!(cofaces, 2);
        }
    }

    #[test]
    fn sphere_cohomology() {
        let n = tetrahedron_boundary();
        assert_eq!(cohomology(&n, Ring::Integers, 0).unwrap().factors, vec![0]);
        assert!(cohomology(&n, Ring::Integers, 1).unwrap().is_trivial());
        assert_eq!(cohomology(&n, Ring::Integers, 2).unwrap().factors, vec![0]);
        assert_eq!(betti_mod_p(&n, 2, 1_000_003), 1);
    }

    #[test]
    fn rp2_cohomology() {
        let n = minimal_rp2();
        assert!(cohomology(&n, Ring::Integers, 1).unwrap().is_trivial());
        assert_eq!(cohomology(&n, Ring::Integers, 2).unwrap().factors, vec![2]);
        let h2 = cohomology(&n, Ring::Mod(2), 2).unwrap();
        assert_eq!(h2.factors, vec![2]);
        assert_eq!(betti_mod_p(&n, 2, 2), 1);
        let g = &h2.generators[0];
        assert!(is_cocycle(g, &n).unwrap());
        assert_eq!(solve_coboundary(g, &n).unwrap(), None);
        assert_eq!(cohomology(&n, Ring::Mod(2), 1).unwrap().factors, vec![2]);
        assert!(cohomology(&n, Ring::Mod(3), 2).unwrap().is_trivial());
    }

    #[test]
    fn torus_cohomology() {
        let n = seven_vertex_torus();
        assert_eq!(n.euler_characteristic(), 0);
        assert_eq!(cohomology(&n, Ring::Integers, 1).unwrap().factors, vec![0, 0]);
        assert_eq!(cohomology(&n, Ring::Integers, 2).unwrap().factors, vec![0]);
    }

    #[test]
    fn suspended_moore_space_has_torsion_in_degree_three() {
        let n = suspended_moore_space(3);
        assert_eq!(n.euler_characteristic(), 1);
        assert!(cohomology(&n, Ring::Integers, 2).unwrap().is_trivial());
        assert_eq!(cohomology(&n, Ring::Integers, 3).unwrap().factors, vec![3]);
        let h2 = cohomology(&n, Ring::Mod(3), 2).unwrap();
        assert_eq!(h2.factors, vec![3]);
        assert_eq!(betti_mod_p(&n, 2, 3), 1);
        let b = bockstein(&h2.generators[0], &n).unwrap();
        assert!(!b.trivial);
        assert!(is_cocycle(&b.beta, &n).unwrap());
    }

    #[test]
    fn bockstein_of_rp2_generator() {
        let n = minimal_rp2();
        let g = cohomology(&n, Ring::Mod(2), 2).unwrap().generators[0].clone();
        // no 3-simplices: the Bockstein lands in the zero group
        let b = bockstein(&g, &n).unwrap();
        assert!(b.trivial);
        assert!(b.beta.values().is_empty());
    }

    #[test]
    fn bockstein_of_coboundary_is_trivial() {
        let n = suspended_moore_space(3);
        let b0 = Cochain::new(1, Ring::Mod(3), (0..n.count(1) as i64).collect()).unwrap();
        let c = coboundary(&b0, &n).unwrap();
        assert!(bockstein(&c, &n).unwrap().trivial);
    }

    #[test]
    fn solve_coboundary_round_trip() {
        let n = suspended_moore_space(2);
        let b0 = Cochain::new(1, Ring::Integers, (0..n.count(1) as i64).map(|i| (i * 7) % 5 - 2).collect()).unwrap();
        let c = coboundary(&b0, &n).unwrap();
        let b = solve_coboundary(&c, &n).unwrap().unwrap();
        assert_eq!(coboundary(&b, &n).unwrap(), c);
        let zero = Cochain::zero(&n, 2, Ring::Mod(2));
        assert!(solve_coboundary(&zero, &n).unwrap().unwrap().is_zero());
    }

    #[test]
    fn non_cocycles_are_detected() {
        let n = Nerve::new(4, &[vec![0, 1, 2, 3]]).unwrap();
        let mut vals = vec![0; n.count(2)];
        vals[0] = 1;
        let c = Cochain::new(2, Ring::Integers, vals).unwrap();
        assert!(!is_cocycle(&c, &n).unwrap());
        assert!(matches!(solve_coboundary(&c, &n), Err(Error::NotCocycle { .. })));
        assert!(is_cocycle(&Cochain::zero(&n, 2, Ring::Integers), &n).unwrap());
    }

    #[test]
    fn mismatched_cochains_are_rejected() {
        let n = tetrahedron_boundary();
        let c = Cochain::new(1, Ring::Integers, vec![1, 2]).unwrap();
        assert!(coboundary(&c, &n).is_err());
        assert!(Cochain::new(0, Ring::Mod(1), vec![]).is_err());
    }

    #[test]
    fn components_in_degree_zero() {
        let n = Nerve::new(6, &[vec![0, 1], vec![2, 3, 4]]).unwrap();
        assert_eq!(n.components(), 3);
        assert_eq!(cohomology(&n, Ring::Integers, 0).unwrap().factors, vec![0, 0, 0]);
    }

    #[test]
    fn smith_form_reconstructs() {
        let a = IntMatrix::from_rows(&[vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]);
        let s = smith_normal_form(&a).unwrap();
        assert_eq!(s.diagonal, vec![2, 6, 12]);
        let lar = s.l.mul(&a).unwrap().mul(&s.r).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(lar.get(i, j), if i == j { s.diagonal[i] } else { 0 });
            }
        }
        assert_eq!(s.l.mul(&s.l_inv).unwrap(), IntMatrix::identity(3));
        assert_eq!(s.r.mul(&s.r_inv).unwrap(), IntMatrix::identity(3));
    }
}
