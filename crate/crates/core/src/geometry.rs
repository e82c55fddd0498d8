//! Benchmark manifolds with quadrature atlases, matrix-valued differential
//! forms, module connections and their curvature.
//!
//! Each chart is a coordinate box carrying a tensor grid of composite
//! Gauss-Legendre nodes. Derivatives of sampled forms use spectral
//! collocation on each panel; values at arbitrary points use barycentric
//! Lagrange interpolation on the panel containing the point.
//!
//! Forms are stored per node as [`MatrixForm`]s: maps from index bitmasks
//! (bit `i` is `dx^i`) to `rank x rank` complex matrices. Scalar forms have
//! rank 1.
//!
//! Connections are local: `A_a` is an anti-Hermitian matrix-valued 1-form in
//! chart `a`, and on an overlap with transition `φ` (from chart `a`
//! coordinates into chart `b`), `A_a = φ A_b φ^{-1} - dφ φ^{-1}`, with `A_b`
//! pulled back along the overlap map.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clifford::{CliffordElement, SpinorRep};
use crate::gerbe::{self, TransitionData};
use crate::linalg::{self, max_abs};
use crate::{cech, CMatrix, Error, RMatrix, Result, C64};

/// Default number of Gauss-Legendre nodes per panel.
pub const DEFAULT_QUADRATURE_ORDER: usize = 32;

/// Largest tolerated gluing or descent residual.
pub const GLUING_TOLERANCE: f64 = 1e-6;

/// Quadrature order from `GERBEDEX_QUAD_ORDER`, else the default.
pub fn quadrature_order() -> usize {
    std::env::var("GERBEDEX_QUAD_ORDER")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&q: &usize| q >= 2)
        .unwrap_or(DEFAULT_QUADRATURE_ORDER)
}

/// Point map between coordinate systems.
pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Scalar function of chart coordinates.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Matrix-valued function of chart coordinates.
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>;
/// Connection 1-form in chart coordinates: one matrix per coordinate direction.
pub type PotentialFn = Arc<dyn Fn(&[f64]) -> Vec<CMatrix> + Send + Sync>;
/// All representations `(chart, coordinates)` of the point `x` of chart `a`.
pub type LocatorFn = Arc<dyn Fn(usize, &[f64]) -> Vec<(usize, Vec<f64>)> + Send + Sync>;

fn wedge_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Matrix-valued (possibly inhomogeneous) differential form at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixForm {
    dim: usize,
    rank: usize,
    terms: BTreeMap<u32, CMatrix>,
}

impl MatrixForm {
    pub fn zero(dim: usize, rank: usize) -> Self {
        MatrixForm {
            dim,
            rank,
            terms: BTreeMap::new(),
        }
    }

    /// `m dx^I` for the index set encoded in `mask`.
    pub fn term(dim: usize, mask: u32, m: CMatrix) -> Self {
        assert!(mask >> dim == 0, "form index outside dimension");
        assert_eq!(m.nrows(), m.ncols(), "form coefficients must be square");
        let mut out = Self::zero(dim, m.nrows());
        out.terms.insert(mask, m);
        out
    }

    /// Degree-0 form `m`.
    pub fn function(dim: usize, m: CMatrix) -> Self {
        Self::term(dim, 0, m)
    }

    pub fn scalar(dim: usize, value: C64) -> Self {
        Self::function(dim, CMatrix::from_element(1, 1, value))
    }

    /// `sum_i components[i] dx^i`.
    pub fn one_form(components: &[CMatrix]) -> Self {
        let dim = components.len();
        let rank = components.first().map(|c| c.nrows()).unwrap_or(1);
        let mut out = Self::zero(dim, rank);
        for (i, c) in components.iter().enumerate() {
            out.terms.insert(1 << i, c.clone());
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Coefficient of `dx^I` (zero if absent).
    pub fn component(&self, mask: u32) -> CMatrix {
        self.terms
            .get(&mask)
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.rank, self.rank))
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &CMatrix)> {
        self.terms.iter().map(|(&k, v)| (k, v))
    }

    /// Scalar value of a rank-1 form's `dx^I` coefficient.
    pub fn scalar_component(&self, mask: u32) -> C64 {
        self.terms.get(&mask).map(|m| m[(0, 0)]).unwrap_or_default()
    }

    /// Degree-`p` part.
    pub fn part(&self, p: u32) -> Self {
        MatrixForm {
            dim: self.dim,
            rank: self.rank,
            terms: self
                .terms
                .iter()
                .filter(|(&k, _)| k.count_ones() == p)
                .map(|(&k, v)| (k, v.clone()))
                .collect(),
        }
    }

    /// Common degree of all terms, if any.
    pub fn degree(&self) -> Option<u32> {
        let mut degrees = self.terms.keys().map(|k| k.count_ones());
        let first = degrees.next()?;
        degrees.all(|d| d == first).then_some(first)
    }

    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let mut out = Self::zero(self.dim, 0);
        for (&k, v) in &self.terms {
            let m = f(v);
            out.rank = m.nrows();
            out.terms.insert(k, m);
        }
        if out.terms.is_empty() {
            out.rank = f(&CMatrix::zeros(self.rank, self.rank)).nrows();
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|m| m * s)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!((self.dim, self.rank), (other.dim, other.rank), "form shape mismatch");
        let mut out = self.clone();
        for (&k, v) in &other.terms {
            let entry = out
                .terms
                .entry(k)
                .or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
            *entry += v * C64::new(sign, 0.0);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, -1.0)
    }

    /// `self ∧ other` with matrix multiplication of coefficients.
    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.rank), (other.dim, other.rank), "form shape mismatch");
        let mut out = Self::zero(self.dim, self.rank);
        for (&a, x) in &self.terms {
            for (&b, y) in &other.terms {
                if a & b != 0 {
                    continue;
                }
                let s = wedge_sign(a, b);
                let entry = out
                    .terms
                    .entry(a | b)
                    .or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
                *entry += x * y * C64::new(s, 0.0);
            }
        }
        out
    }

    /// Truncated exponential `sum_k X^k / k!` (exact for even-degree forms).
    pub fn exp(&self) -> Self {
        let mut out = Self::function(self.dim, linalg::identity(self.rank));
        let mut power = out.clone();
        for k in 1..=self.dim {
            power = power.wedge(self).scale(C64::new(1.0 / k as f64, 0.0));
            out = out.add(&power);
        }
        out
    }

    /// Coefficientwise trace, a rank-1 form.
    pub fn trace(&self) -> Self {
        self.map(|m| CMatrix::from_element(1, 1, m.trace()))
    }

    /// `g X g^{-1}` coefficientwise.
    pub fn conjugate(&self, g: &CMatrix, g_inv: &CMatrix) -> Self {
        self.map(|m| g * m * g_inv)
    }

    /// `X (x) 1_r` coefficientwise.
    pub fn tensor_identity_right(&self, r: usize) -> Self {
        self.map(|m| m.kronecker(&linalg::identity(r)))
    }

    /// `1_r (x) X` coefficientwise.
    pub fn tensor_identity_left(&self, r: usize) -> Self {
        self.map(|m| linalg::identity(r).kronecker(m))
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(max_abs).fold(0.0, f64::max)
    }

    /// Pullback along a map with Jacobian `jac[(j, i)] = ∂y_j/∂x_i`.
    pub fn pullback(&self, jac: &RMatrix) -> Self {
        let mut out = Self::zero(jac.ncols(), self.rank);
        for (&mask_y, v) in &self.terms {
            let rows: Vec<usize> = (0..self.dim).filter(|j| mask_y & (1 << j) != 0).collect();
            let p = rows.len();
            for mask_x in 0u32..(1 << jac.ncols()) {
                if mask_x.count_ones() as usize != p {
                    continue;
                }
                let cols: Vec<usize> = (0..jac.ncols()).filter(|i| mask_x & (1 << i) != 0).collect();
                let minor = RMatrix::from_fn(p, p, |r, c| jac[(rows[r], cols[c])]);
                let det = if p == 0 { 1.0 } else { minor.determinant() };
                if det != 0.0 {
                    let entry = out
                        .terms
                        .entry(mask_x)
                        .or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
                    *entry += v * C64::new(det, 0.0);
                }
            }
        }
        out
    }
}

/// One coordinate axis split into Gauss-Legendre panels.
#[derive(Clone, Debug)]
pub struct Axis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: Vec<Panel>,
}

#[derive(Clone, Debug)]
struct Panel {
    start: usize,
    a: f64,
    b: f64,
    diff: RMatrix,
    bary: Vec<f64>,
}

impl Axis {
    /// Panels `[breaks[k], breaks[k+1]]`, `order` nodes each.
    pub fn composite(breaks: &[f64], order: usize) -> Self {
        assert!(breaks.len() >= 2, "an axis needs at least one panel");
        let (ref_nodes, ref_weights) = linalg::gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panels = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let local: Vec<f64> = ref_nodes.iter().map(|t| a + half * (t + 1.0)).collect();
            panels.push(Panel {
                start: nodes.len(),
                a,
                b,
                diff: linalg::differentiation_matrix(&local),
                bary: linalg::barycentric_weights(&local),
            });
            nodes.extend_from_slice(&local);
            weights.extend(ref_weights.iter().map(|w| w * half));
        }
        Axis { nodes, weights, panels }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn panel_of_node(&self, i: usize) -> &Panel {
        self.panels
            .iter()
            .rev()
            .find(|p| p.start <= i)
            .expect("node index inside the axis")
    }

    fn panel_len(&self) -> usize {
        self.panels[0].bary.len()
    }

    /// Interpolation stencil `(node, weight)` for a coordinate value.
    fn stencil(&self, x: f64) -> Vec<(usize, f64)> {
        let panel = self
            .panels
            .iter()
            .find(|p| x <= p.b)
            .unwrap_or_else(|| self.panels.last().expect("nonempty axis"));
        let panel = if x < panel.a {
            &self.panels[0]
        } else {
            panel
        };
        let len = panel.bary.len();
        let local = &self.nodes[panel.start..panel.start + len];
        linalg::lagrange_basis(local, &panel.bary, x)
            .into_iter()
            .enumerate()
            .map(|(k, w)| (panel.start + k, w))
            .collect()
    }
}

/// A coordinate chart with its quadrature grid.
#[derive(Clone)]
pub struct Chart {
    pub name: String,
    axes: Vec<Axis>,
    /// `+1` if the coordinate orientation agrees with the manifold's.
    pub orientation: f64,
    pou: ScalarFn,
    embedding: MapFn,
    pou_values: Vec<f64>,
}

impl Chart {
    pub fn new(name: &str, axes: Vec<Axis>, orientation: f64, pou: ScalarFn, embedding: MapFn) -> Self {
        let mut chart = Chart {
            name: name.to_string(),
            axes,
            orientation,
            pou,
            embedding,
            pou_values: Vec::new(),
        };
        chart.pou_values = (0..chart.node_count()).map(|i| (chart.pou)(&chart.node(i))).collect();
        chart
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            idx[k] = i % n;
            i /= n;
        }
        idx
    }

    fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.len()).product()
    }

    /// Coordinates of node `i`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.nodes[k])
            .collect()
    }

    /// Product quadrature weight of node `i` (no partition of unity).
    pub fn weight(&self, i: usize) -> f64 {
        self.multi_index(i)
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.weights[k])
            .product()
    }

    /// Partition-of-unity value at node `i`.
    pub fn pou(&self, i: usize) -> f64 {
        self.pou_values[i]
    }

    pub fn pou_at(&self, x: &[f64]) -> f64 {
        (self.pou)(x)
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        (self.embedding)(x)
    }

    /// Interpolation stencil `(node, weight)` at `x`.
    fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = vec![(0usize, 1.0f64)];
        for (k, axis) in self.axes.iter().enumerate() {
            let stride = self.stride(k);
            let s = axis.stencil(x[k]);
            out = out
                .iter()
                .flat_map(|&(i, w)| s.iter().map(move |&(j, v)| (i + j * stride, w * v)))
                .collect();
        }
        out
    }

    /// Collocation derivative along `axis` of per-node matrices.
    fn derivative(&self, values: &[CMatrix], axis: usize) -> Vec<CMatrix> {
        let stride = self.stride(axis);
        let ax = &self.axes[axis];
        let len = ax.panel_len();
        (0..self.node_count())
            .map(|i| {
                let k = self.multi_index(i)[axis];
                let panel = ax.panel_of_node(k);
                let row = k - panel.start;
                let base = i - k * stride;
                let mut acc = CMatrix::zeros(values[i].nrows(), values[i].ncols());
                for c in 0..len {
                    let coef = panel.diff[(row, c)];
                    if coef != 0.0 {
                        acc += &values[base + (panel.start + c) * stride] * C64::new(coef, 0.0);
                    }
                }
                acc
            })
            .collect()
    }
}

/// Overlap of chart `from` with chart `to`: a coordinate change defined on
/// the overlap and a few interior check points (in `from` coordinates).
#[derive(Clone)]
pub struct Overlap {
    pub from: usize,
    pub to: usize,
    map: MapFn,
    pub check_points: Vec<Vec<f64>>,
}

impl Overlap {
    pub fn new(from: usize, to: usize, map: MapFn, check_points: Vec<Vec<f64>>) -> Self {
        Overlap {
            from,
            to,
            map,
            check_points,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    /// `J[(j, i)] = ∂y_j/∂x_i` by fourth-order central differences.
    pub fn jacobian(&self, x: &[f64]) -> RMatrix {
        let map = &self.map;
        let n_out = map(x).len();
        jacobian_of(|p| map(p), x, n_out)
    }
}

fn jacobian_of(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], n_out: usize) -> RMatrix {
    let h = 1e-3;
    let mut jac = RMatrix::zeros(n_out, x.len());
    for i in 0..x.len() {
        let at = |s: f64| {
            let mut p = x.to_vec();
            p[i] += s * h;
            f(&p)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        for j in 0..n_out {
            jac[(j, i)] = (m2[j] - 8.0 * m1[j] + 8.0 * p1[j] - p2[j]) / (12.0 * h);
        }
    }
    jac
}

/// Fourth-order central-difference partial derivatives of a matrix function.
fn matrix_gradient(f: &MatrixFn, x: &[f64]) -> Vec<CMatrix> {
    let h = 1e-3;
    (0..x.len())
        .map(|i| {
            let at = |s: f64| {
                let mut p = x.to_vec();
                p[i] += s * h;
                f(&p)
            };
            (at(-2.0) - at(-1.0) * C64::new(8.0, 0.0) + at(1.0) * C64::new(8.0, 0.0) - at(2.0)) / C64::new(12.0 * h, 0.0)
        })
        .collect()
}

/// Charts, overlaps and quadrature of a closed manifold.
#[derive(Clone)]
pub struct ChartAtlas {
    pub name: String,
    pub order: usize,
    charts: Vec<Chart>,
    overlaps: Vec<Overlap>,
    locator: LocatorFn,
}

impl ChartAtlas {
    pub fn new(name: &str, order: usize, charts: Vec<Chart>, overlaps: Vec<Overlap>, locator: LocatorFn) -> Self {
        ChartAtlas {
            name: name.to_string(),
            order,
            charts,
            overlaps,
            locator,
        }
    }

    pub fn dim(&self) -> usize {
        self.charts[0].dim()
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn overlaps(&self) -> &[Overlap] {
        &self.overlaps
    }

    /// Largest `|sum_b ρ_b - 1|` over all grid nodes.
    pub fn partition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, chart) in self.charts.iter().enumerate() {
            for i in 0..chart.node_count() {
                let x = chart.node(i);
                let total: f64 = (self.locator)(a, &x)
                    .iter()
                    .map(|(b, y)| self.charts[*b].pou_at(y))
                    .sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
        worst
    }
}

/// A form sampled on every node of an atlas.
#[derive(Clone, Debug)]
pub struct FormField {
    dim: usize,
    rank: usize,
    values: Vec<Vec<MatrixForm>>,
}

impl FormField {
    pub fn from_fn(atlas: &ChartAtlas, rank: usize, f: impl Fn(usize, &[f64]) -> MatrixForm) -> Self {
        let values = atlas
            .charts
            .iter()
            .enumerate()
            .map(|(a, chart)| (0..chart.node_count()).map(|i| f(a, &chart.node(i))).collect())
            .collect();
        FormField {
            dim: atlas.dim(),
            rank,
            values,
        }
    }

    /// Field from per-chart node values.
    pub fn from_values(dim: usize, rank: usize, values: Vec<Vec<MatrixForm>>) -> Self {
        FormField { dim, rank, values }
    }

    pub fn zero(atlas: &ChartAtlas, rank: usize) -> Self {
        Self::from_fn(atlas, rank, |_, _| MatrixForm::zero(atlas.dim(), rank))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart_count(&self) -> usize {
        self.values.len()
    }

    /// Values at the nodes of chart `a`.
    pub fn chart_values(&self, a: usize) -> &[MatrixForm] {
        &self.values[a]
    }

    /// Common degree of all nonzero terms.
    pub fn degree(&self) -> Option<u32> {
        let mut deg = None;
        for f in self.values.iter().flatten() {
            for (mask, _) in f.terms() {
                let d = mask.count_ones();
                match deg {
                    None => deg = Some(d),
                    Some(prev) if prev != d => return None,
                    _ => {}
                }
            }
        }
        deg
    }

    pub fn map(&self, f: impl Fn(&MatrixForm) -> MatrixForm) -> Self {
        let values: Vec<Vec<MatrixForm>> = self.values.iter().map(|c| c.iter().map(&f).collect()).collect();
        let rank = values
            .iter()
            .flatten()
            .next()
            .map(|m| m.rank())
            .unwrap_or(self.rank);
        FormField {
            dim: self.dim,
            rank,
            values,
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(&MatrixForm, &MatrixForm) -> MatrixForm) -> Self {
        let values: Vec<Vec<MatrixForm>> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(x, y)).collect())
            .collect();
        let rank = values
            .iter()
            .flatten()
            .next()
            .map(|m| m.rank())
            .unwrap_or(self.rank);
        FormField {
            dim: self.dim,
            rank,
            values,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.sub(b))
    }

    pub fn wedge(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.wedge(b))
    }

    pub fn trace(&self) -> Self {
        self.map(|f| f.trace())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// Exterior derivative by spectral collocation.
    pub fn d(&self, atlas: &ChartAtlas) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for (a, chart) in atlas.charts.iter().enumerate() {
            let nodes = &self.values[a];
            let mut out: Vec<MatrixForm> = vec![MatrixForm::zero(self.dim, self.rank); nodes.len()];
            let masks: std::collections::BTreeSet<u32> = nodes.iter().flat_map(|f| f.terms().map(|(m, _)| m)).collect();
            for mask in masks {
                let comp: Vec<CMatrix> = nodes.iter().map(|f| f.component(mask)).collect();
                for j in 0..self.dim {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    let deriv = chart.derivative(&comp, j);
                    let sign = if (mask & ((1 << j) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    for (o, dv) in out.iter_mut().zip(deriv) {
                        *o = o.add(&MatrixForm::term(self.dim, mask | (1 << j), dv * C64::new(sign, 0.0)));
                    }
                }
            }
            values.push(out);
        }
        FormField {
            dim: self.dim,
            rank: self.rank,
            values,
        }
    }

    /// Interpolated value at `x` in chart `a`.
    pub fn evaluate(&self, atlas: &ChartAtlas, a: usize, x: &[f64]) -> MatrixForm {
        let mut out = MatrixForm::zero(self.dim, self.rank);
        for (i, w) in atlas.charts[a].stencil(x) {
            out = out.add(&self.values[a][i].scale(C64::new(w, 0.0)));
        }
        out
    }

    /// Largest difference between `f_from` and `φ f_to φ^{-1}` (pulled back)
    /// at the overlap check points; `φ` is the identity when `transitions`
    /// is `None`.
    pub fn overlap_residual(&self, atlas: &ChartAtlas, transitions: Option<&[MatrixFn]>) -> f64 {
        let mut worst = 0.0f64;
        for (o_id, o) in atlas.overlaps.iter().enumerate() {
            for x in &o.check_points {
                let here = self.evaluate(atlas, o.from, x);
                let y = o.apply(x);
                let mut there = self.evaluate(atlas, o.to, &y).pullback(&o.jacobian(x));
                if let Some(ts) = transitions {
                    let phi = ts[o_id](x);
                    let inv = linalg::try_inverse(&phi).expect("invertible transition");
                    there = there.conjugate(&phi, &inv);
                }
                worst = worst.max(here.sub(&there).max_abs());
            }
        }
        worst
    }
}

/// `∫_M f` for a rank-1 form; mixed forms contribute their top-degree part.
pub fn integrate_top(f: &FormField, atlas: &ChartAtlas) -> Result<C64> {
    if f.rank != 1 {
        return Err(Error::invalid("only scalar forms can be integrated"));
    }
    let dim = atlas.dim();
    if let Some(d) = f.degree() {
        if d as usize != dim {
            return Err(Error::invalid(format!("cannot integrate a {d}-form over a {dim}-manifold")));
        }
    }
    let top = (1u32 << dim) - 1;
    let mut total = C64::new(0.0, 0.0);
    for (a, chart) in atlas.charts.iter().enumerate() {
        let mut partial = C64::new(0.0, 0.0);
        for (i, form) in f.values[a].iter().enumerate() {
            let rho = chart.pou(i);
            if rho != 0.0 {
                partial += form.scalar_component(top) * (chart.weight(i) * rho);
            }
        }
        total += partial * chart.orientation;
    }
    Ok(total)
}

/// A connection on a module, given in closed form chart by chart.
#[derive(Clone)]
pub struct ModuleConnection {
    pub name: String,
    rank: usize,
    potentials: Vec<PotentialFn>,
    transitions: Vec<MatrixFn>,
}

/// Curvature together with its verified descent residual.
#[derive(Clone, Debug)]
pub struct Curvature {
    pub field: FormField,
    pub gluing_residual: f64,
    pub descent_residual: f64,
}

impl ModuleConnection {
    /// `potentials[a]` gives `A_a` in chart `a`; `transitions[o]` gives the
    /// module transition on overlap `o` of the atlas.
    pub fn new(name: &str, rank: usize, potentials: Vec<PotentialFn>, transitions: Vec<MatrixFn>) -> Self {
        ModuleConnection {
            name: name.to_string(),
            rank,
            potentials,
            transitions,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn transitions(&self) -> &[MatrixFn] {
        &self.transitions
    }

    /// `A_a(x)` as a 1-form.
    pub fn potential(&self, chart: usize, x: &[f64]) -> MatrixForm {
        MatrixForm::one_form(&(self.potentials[chart])(x))
    }

    fn check_shape(&self, atlas: &ChartAtlas) -> Result<()> {
        if self.potentials.len() != atlas.charts.len() || self.transitions.len() != atlas.overlaps.len() {
            return Err(Error::invalid(format!(
                "connection `{}` does not fit atlas `{}`",
                self.name, atlas.name
            )));
        }
        Ok(())
    }

    /// Largest violation of `A_a = φ A_b φ^{-1} - dφ φ^{-1}` at check points.
    pub fn gluing_residual(&self, atlas: &ChartAtlas) -> Result<f64> {
        self.check_shape(atlas)?;
        let mut worst = 0.0f64;
        for (o_id, o) in atlas.overlaps.iter().enumerate() {
            let phi_fn = &self.transitions[o_id];
            for x in &o.check_points {
                let phi = phi_fn(x);
                let inv = linalg::try_inverse(&phi).ok_or_else(|| Error::invalid("singular transition"))?;
                let y = o.apply(x);
                let pulled = self.potential(o.to, &y).pullback(&o.jacobian(x));
                let dphi = MatrixForm::one_form(&matrix_gradient(phi_fn, x).iter().map(|g| g * &inv).collect::<Vec<_>>());
                let expected = pulled.conjugate(&phi, &inv).sub(&dphi);
                worst = worst.max(self.potential(o.from, x).sub(&expected).max_abs());
            }
        }
        Ok(worst)
    }

    /// `A` sampled on the grid.
    pub fn sample(&self, atlas: &ChartAtlas) -> Result<FormField> {
        self.check_shape(atlas)?;
        Ok(FormField::from_fn(atlas, self.rank, |a, x| self.potential(a, x)))
    }

    /// The same module with `A + a` for a descended 1-form `a` (closure per chart).
    pub fn with_added_form(&self, name: &str, form: Vec<PotentialFn>) -> Result<Self> {
        if form.len() != self.potentials.len() {
            return Err(Error::invalid("form and connection have different chart counts"));
        }
        let potentials = self
            .potentials
            .iter()
            .zip(form)
            .map(|(a, b)| {
                let a = a.clone();
                Arc::new(move |x: &[f64]| a(x).iter().zip(b(x)).map(|(p, q)| p + q).collect()) as PotentialFn
            })
            .collect();
        Ok(ModuleConnection {
            name: name.to_string(),
            rank: self.rank,
            potentials,
            transitions: self.transitions.clone(),
        })
    }
}

/// `F_a = dA_a + A_a ∧ A_a` on the grid; rejects connections whose gluing
/// or curvature descent residual exceeds [`GLUING_TOLERANCE`].
pub fn curvature(c: &ModuleConnection, atlas: &ChartAtlas) -> Result<Curvature> {
    let gluing_residual = c.gluing_residual(atlas)?;
    if gluing_residual > GLUING_TOLERANCE {
        return Err(Error::residual(
            format!("gluing of connection `{}`", c.name),
            gluing_residual,
            GLUING_TOLERANCE,
        ));
    }
    let a = c.sample(atlas)?;
    let field = a.d(atlas).add(&a.wedge(&a));
    let descent_residual = field.overlap_residual(atlas, Some(&c.transitions));
    if descent_residual > GLUING_TOLERANCE {
        return Err(Error::residual("curvature descent", descent_residual, GLUING_TOLERANCE));
    }
    Ok(Curvature {
        field,
        gluing_residual,
        descent_residual,
    })
}

/// `a = A - A'`, checked to glue by conjugation alone.
pub fn connection_difference(c1: &ModuleConnection, c2: &ModuleConnection, atlas: &ChartAtlas) -> Result<FormField> {
    c1.check_shape(atlas)?;
    c2.check_shape(atlas)?;
    if c1.rank != c2.rank {
        return Err(Error::invalid("connections on modules of different rank"));
    }
    for (o_id, o) in atlas.overlaps.iter().enumerate() {
        for x in &o.check_points {
            let diff = max_abs(&(c1.transitions[o_id](x) - c2.transitions[o_id](x)));
            if diff > 1e-12 {
                return Err(Error::invalid("connections live on different modules"));
            }
        }
    }
    let a = c1.sample(atlas)?.sub(&c2.sample(atlas)?);
    // pure conjugation on overlaps, tested with the closed forms
    let mut worst = 0.0f64;
    for (o_id, o) in atlas.overlaps.iter().enumerate() {
        for x in &o.check_points {
            let phi = c1.transitions[o_id](x);
            let inv = linalg::try_inverse(&phi).ok_or_else(|| Error::invalid("singular transition"))?;
            let y = o.apply(x);
            let jac = o.jacobian(x);
            let here = c1.potential(o.from, x).sub(&c2.potential(o.from, x));
            let there = c1.potential(o.to, &y).sub(&c2.potential(o.to, &y)).pullback(&jac).conjugate(&phi, &inv);
            worst = worst.max(here.sub(&there).max_abs());
        }
    }
    if worst > GLUING_TOLERANCE {
        return Err(Error::residual("difference of connections descends", worst, GLUING_TOLERANCE));
    }
    Ok(a)
}

/// `A_1 (x) 1 + 1 (x) A_2` with transitions `φ_1 (x) φ_2`.
pub fn tensor_connection(c1: &ModuleConnection, c2: &ModuleConnection) -> Result<ModuleConnection> {
    if c1.potentials.len() != c2.potentials.len() || c1.transitions.len() != c2.transitions.len() {
        return Err(Error::invalid("connections live on different atlases"));
    }
    let (r1, r2) = (c1.rank, c2.rank);
    let potentials = c1
        .potentials
        .iter()
        .zip(&c2.potentials)
        .map(|(a, b)| {
            let (a, b) = (a.clone(), b.clone());
            Arc::new(move |x: &[f64]| {
                a(x).iter()
                    .zip(b(x))
                    .map(|(p, q)| p.kronecker(&linalg::identity(r2)) + linalg::identity(r1).kronecker(&q))
                    .collect()
            }) as PotentialFn
        })
        .collect();
    let transitions = c1
        .transitions
        .iter()
        .zip(&c2.transitions)
        .map(|(a, b)| {
            let (a, b) = (a.clone(), b.clone());
            Arc::new(move |x: &[f64]| a(x).kronecker(&b(x))) as MatrixFn
        })
        .collect();
    Ok(ModuleConnection {
        name: format!("{} (x) {}", c1.name, c2.name),
        rank: r1 * r2,
        potentials,
        transitions,
    })
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        f(t) / (f(t) + f(1.0 - t))
    }
}

/// Benchmark manifolds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Manifold {
    S2,
    T2,
    CP2,
}

impl Manifold {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "S2" => Ok(Manifold::S2),
            "T2" => Ok(Manifold::T2),
            "CP2" => Ok(Manifold::CP2),
            _ => Err(Error::Unknown {
                kind: "manifold",
                name: name.to_string(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Manifold::S2 => "S2",
            Manifold::T2 => "T2",
            Manifold::CP2 => "CP2",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Manifold::CP2 => 4,
            _ => 2,
        }
    }
}

/// Cap boundaries of the polar charts of `S^2`: chart boxes are
/// `θ in [0, S2_OUTER]`, and the partition of unity switches over
/// `[S2_INNER, S2_OUTER]`.
pub const S2_INNER: f64 = PI / 3.0;
pub const S2_OUTER: f64 = 2.0 * PI / 3.0;

/// Shipped benchmark data of one manifold.
#[derive(Clone)]
pub struct Benchmark {
    pub manifold: Manifold,
    atlas: Option<ChartAtlas>,
}

/// Looks up a benchmark by name (`S2`, `T2`, `CP2`) at the given quadrature order.
pub fn benchmark_registry(name: &str, order: usize) -> Result<Benchmark> {
    let manifold = Manifold::parse(name)?;
    let atlas = match manifold {
        Manifold::S2 => Some(s2_atlas(order)),
        Manifold::T2 => Some(t2_atlas(order)),
        Manifold::CP2 => None,
    };
    Ok(Benchmark { manifold, atlas })
}

fn s2_atlas(order: usize) -> ChartAtlas {
    let pou: ScalarFn = Arc::new(|x: &[f64]| {
        if x[0] > S2_OUTER {
            0.0
        } else {
            1.0 - smooth_step((x[0] - S2_INNER) / (S2_OUTER - S2_INNER))
        }
    });
    let axes = || {
        vec![
            Axis::composite(&[0.0, S2_INNER, S2_OUTER], order),
            Axis::composite(&[0.0, PI, 2.0 * PI], order),
        ]
    };
    let north_embed: MapFn = Arc::new(|x: &[f64]| vec![x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), x[0].cos()]);
    let south_embed: MapFn = Arc::new(|x: &[f64]| vec![x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), -x[0].cos()]);
    let charts = vec![
        Chart::new("north", axes(), 1.0, pou.clone(), north_embed),
        Chart::new("south", axes(), -1.0, pou, south_embed),
    ];
    let flip: MapFn = Arc::new(|x: &[f64]| vec![PI - x[0], x[1]]);
    let mut checks = Vec::new();
    for f in [0.2, 0.5, 0.8] {
        for phi in [0.3, 1.9, 3.5, 5.1] {
            checks.push(vec![S2_INNER + f * (S2_OUTER - S2_INNER), phi]);
        }
    }
    let overlaps = vec![
        Overlap::new(0, 1, flip.clone(), checks.clone()),
        Overlap::new(1, 0, flip, checks),
    ];
    let locator: LocatorFn = Arc::new(|a: usize, x: &[f64]| {
        let mut out = vec![(a, x.to_vec())];
        if x[0] >= S2_INNER {
            out.push((1 - a, vec![PI - x[0], x[1]]));
        }
        out
    });
    ChartAtlas::new("S2", order, charts, overlaps, locator)
}

fn t2_atlas(order: usize) -> ChartAtlas {
    let axes = vec![
        Axis::composite(&[0.0, 0.5, 1.0], order),
        Axis::composite(&[0.0, 0.5, 1.0], order),
    ];
    let embed: MapFn = Arc::new(|x: &[f64]| {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        vec![a.cos(), a.sin(), b.cos(), b.sin()]
    });
    let chart = Chart::new("box", axes, 1.0, Arc::new(|_: &[f64]| 1.0), embed);
    let ys = [0.13, 0.41, 0.77];
    let overlaps = vec![
        Overlap::new(
            0,
            0,
            Arc::new(|x: &[f64]| vec![x[0] - 1.0, x[1]]),
            ys.iter().map(|&y| vec![1.0, y]).collect(),
        ),
        Overlap::new(
            0,
            0,
            Arc::new(|x: &[f64]| vec![x[0], x[1] - 1.0]),
            ys.iter().map(|&y| vec![y, 1.0]).collect(),
        ),
    ];
    let locator: LocatorFn = Arc::new(|a: usize, x: &[f64]| vec![(a, x.to_vec())]);
    ChartAtlas::new("T2", order, vec![chart], overlaps, locator)
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn scalar_matrix(z: C64) -> CMatrix {
    CMatrix::from_element(1, 1, z)
}

impl Benchmark {
    pub fn dimension(&self) -> usize {
        self.manifold.dimension()
    }

    /// Quadrature atlas; `CP2` is handled symbolically and has none.
    pub fn atlas(&self) -> Result<&ChartAtlas> {
        self.atlas
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} has no quadrature atlas", self.manifold.name())))
    }

    /// Sampled frame-bundle transitions: the four-cap cover for `S^2`, the
    /// parallel frame (identity transitions) on a 7-vertex torus nerve for `T^2`.
    pub fn frame_transitions(&self) -> Result<TransitionData> {
        match self.manifold {
            Manifold::S2 => gerbe::s2_frame_transitions(),
            Manifold::T2 => TransitionData::constant(cech::seven_vertex_torus(), &RMatrix::identity(2, 2)),
            Manifold::CP2 => Err(Error::invalid("CP2 frame data is not sampled")),
        }
    }

    /// Levi-Civita curvature as an `so(n)`-valued 2-form in the frames used by
    /// the spin connection (`R_12 = K vol`, `K = 1` on the round sphere).
    pub fn tangent_curvature(&self) -> Result<FormField> {
        let atlas = self.atlas()?;
        Ok(match self.manifold {
            Manifold::S2 => FormField::from_fn(atlas, 2, |a, x| {
                let vol = if a == 0 { x[0].sin() } else { -x[0].sin() };
                let m = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(vol, 0.0), c(-vol, 0.0), c(0.0, 0.0)]);
                MatrixForm::term(2, 0b11, m)
            }),
            _ => FormField::zero(atlas, 2),
        })
    }

    /// Riemannian area form (coefficient in each chart's coordinates).
    pub fn volume_form(&self) -> Result<FormField> {
        let atlas = self.atlas()?;
        Ok(match self.manifold {
            Manifold::S2 => FormField::from_fn(atlas, 1, |a, x| {
                let v = if a == 0 { x[0].sin() } else { -x[0].sin() };
                MatrixForm::term(2, 0b11, scalar_matrix(c(v, 0.0)))
            }),
            _ => FormField::from_fn(atlas, 1, |_, _| MatrixForm::term(2, 0b11, scalar_matrix(c(1.0, 0.0)))),
        })
    }

    /// Flat trivial rank-`r` module.
    pub fn trivial(&self, rank: usize) -> Result<ModuleConnection> {
        let atlas = self.atlas()?;
        let dim = atlas.dim();
        let potentials = atlas
            .charts
            .iter()
            .map(|_| Arc::new(move |_: &[f64]| vec![CMatrix::zeros(rank, rank); dim]) as PotentialFn)
            .collect();
        let transitions = atlas
            .overlaps
            .iter()
            .map(|_| Arc::new(move |_: &[f64]| linalg::identity(rank)) as MatrixFn)
            .collect();
        Ok(ModuleConnection::new(&format!("trivial{rank}"), rank, potentials, transitions))
    }

    /// Line bundle of degree `m` with its standard connection: the monopole
    /// on `S^2`, constant flux on `T^2`.
    pub fn line_bundle(&self, m: i64) -> Result<ModuleConnection> {
        let atlas = self.atlas()?;
        let mf = m as f64;
        let name = format!("L_{m}");
        Ok(match self.manifold {
            Manifold::S2 => {
                let north: PotentialFn = Arc::new(move |x: &[f64]| {
                    vec![scalar_matrix(c(0.0, 0.0)), scalar_matrix(c(0.0, -0.5 * mf * (1.0 - x[0].cos())))]
                });
                let south: PotentialFn = Arc::new(move |x: &[f64]| {
                    vec![scalar_matrix(c(0.0, 0.0)), scalar_matrix(c(0.0, 0.5 * mf * (1.0 - x[0].cos())))]
                });
                let ns: MatrixFn = Arc::new(move |x: &[f64]| scalar_matrix(C64::from_polar(1.0, mf * x[1])));
                let sn: MatrixFn = Arc::new(move |x: &[f64]| scalar_matrix(C64::from_polar(1.0, -mf * x[1])));
                ModuleConnection::new(&name, 1, vec![north, south], vec![ns, sn])
            }
            Manifold::T2 => {
                let pot: PotentialFn = Arc::new(move |x: &[f64]| {
                    vec![scalar_matrix(c(0.0, 0.0)), scalar_matrix(c(0.0, -2.0 * PI * mf * x[0]))]
                });
                let across_x: MatrixFn = Arc::new(move |x: &[f64]| scalar_matrix(C64::from_polar(1.0, 2.0 * PI * mf * x[1])));
                let across_y: MatrixFn = Arc::new(|_: &[f64]| scalar_matrix(c(1.0, 0.0)));
                let _ = atlas;
                ModuleConnection::new(&name, 1, vec![pot], vec![across_x, across_y])
            }
            Manifold::CP2 => unreachable!("atlas lookup fails first"),
        })
    }

    /// Spinor module `Σ` with the spin connection (Clifford actions are the
    /// generators of [`SpinorRep::new(2)`] in every chart).
    pub fn spinor_module(&self) -> Result<ModuleConnection> {
        let atlas = self.atlas()?;
        let rep = SpinorRep::new(2)?;
        let g12 = &rep.generators()[0] * &rep.generators()[1];
        Ok(match self.manifold {
            Manifold::S2 => {
                let (gn, gs) = (g12.clone(), g12.clone());
                let north: PotentialFn = Arc::new(move |x: &[f64]| {
                    vec![CMatrix::zeros(2, 2), &gn * c(-0.5 * (1.0 - x[0].cos()), 0.0)]
                });
                let south: PotentialFn = Arc::new(move |x: &[f64]| {
                    vec![CMatrix::zeros(2, 2), &gs * c(0.5 * (1.0 - x[0].cos()), 0.0)]
                });
                // lift of the frame rotation by 2φ - π
                let element = |x: &[f64], sign: f64| {
                    let one = CliffordElement::scalar(2, c(x[1].sin(), 0.0));
                    let biv = CliffordElement::monomial(2, &[0, 1]).scale(c(-sign * x[1].cos(), 0.0));
                    &one + &biv
                };
                let (r1, r2) = (rep.clone(), rep.clone());
                let ns: MatrixFn = Arc::new(move |x: &[f64]| r1.represent(&element(x, 1.0)).expect("n = 2"));
                let sn: MatrixFn = Arc::new(move |x: &[f64]| r2.represent(&element(x, -1.0)).expect("n = 2"));
                ModuleConnection::new("spinor", 2, vec![north, south], vec![ns, sn])
            }
            Manifold::T2 => {
                let mut flat = self.trivial(2)?;
                flat.name = "spinor".to_string();
                let _ = atlas;
                flat
            }
            Manifold::CP2 => unreachable!("atlas lookup fails first"),
        })
    }

    /// Clifford actions `c(e_i)` on the spinor module in every chart.
    pub fn spinor_actions(&self) -> Result<Vec<CMatrix>> {
        Ok(SpinorRep::new(2)?.generators().to_vec())
    }

    /// `Σ (x) L_m`.
    pub fn twisted_spinors(&self, m: i64) -> Result<ModuleConnection> {
        tensor_connection(&self.spinor_module()?, &self.line_bundle(m)?)
    }

    /// Named entries of the connection catalog: `trivial`, `L_<m>`,
    /// `spinor`, `spinor_L_<m>`.
    pub fn catalog(&self, name: &str) -> Result<ModuleConnection> {
        let unknown = || Error::Unknown {
            kind: "module",
            name: name.to_string(),
        };
        if name == "trivial" {
            return self.trivial(1);
        }
        if name == "spinor" {
            return self.spinor_module();
        }
        if let Some(m) = name.strip_prefix("spinor_L_") {
            return self.twisted_spinors(m.parse().map_err(|_| unknown())?);
        }
        if let Some(m) = name.strip_prefix("L_") {
            return self.line_bundle(m.parse().map_err(|_| unknown())?);
        }
        Err(unknown())
    }

    /// A random global 1-form `i Σ_k f_k dg_k` (real `f_k`, `g_k` low-degree
    /// polynomials in the embedding coordinates), written in every chart.
    pub fn random_global_form(&self, seed: u64, rank: usize) -> Result<Vec<PotentialFn>> {
        let atlas = self.atlas()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ambient = atlas.charts[0].embed(&atlas.charts[0].node(0)).len();
        let terms: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
            .map(|_| {
                let f: Vec<f64> = (0..=ambient).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g: Vec<f64> = (0..ambient * ambient + ambient).map(|_| rng.random_range(-1.0..1.0)).collect();
                (f, g)
            })
            .collect();
        let terms = Arc::new(terms);
        Ok(atlas
            .charts
            .iter()
            .map(|chart| {
                let chart = chart.clone();
                let terms = terms.clone();
                Arc::new(move |x: &[f64]| {
                    let p = chart.embed(x);
                    let jac = jacobian_of(|y| chart.embed(y), x, p.len());
                    let n = p.len();
                    let mut out = vec![0.0; x.len()];
                    for (f, g) in terms.iter() {
                        let fv = f[0] + (0..n).map(|l| f[l + 1] * p[l]).sum::<f64>();
                        // g(p) = sum_{l,k} G_lk p_l p_k + sum_l b_l p_l
                        let grad: Vec<f64> = (0..n)
                            .map(|l| (0..n).map(|k| (g[l * n + k] + g[k * n + l]) * p[k]).sum::<f64>() + g[n * n + l])
                            .collect();
                        for (i, o) in out.iter_mut().enumerate() {
                            *o += fv * (0..n).map(|l| grad[l] * jac[(l, i)]).sum::<f64>();
                        }
                    }
                    out.iter().map(|&v| linalg::identity(rank) * c(0.0, v)).collect()
                }) as PotentialFn
            })
            .collect())
    }
}
