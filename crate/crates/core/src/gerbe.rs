//! Lifting bundle gerbes in Čech form.
//!
//! Transition functions are sampled: each overlap `U_a ∩ U_b` (`a < b`) carries
//! a connected graph of sample points with one `SO(n)` matrix per node, and
//! each triple overlap names the nodes of its three edge graphs that sit at
//! the same point of `U_a ∩ U_b ∩ U_c`.
//!
//! Matrices act on component vectors: `v_a = g_ab v_b`, so
//! `g_ab[j][i] = <f^a_j, f^b_i>` for local frames `f^a`, `f^b`, and the
//! cocycle condition reads `g_ab g_bc g_ca = 1`. For `a > b` the transition is
//! `g_ba^{-1}`.
//!
//! A `Γ^d`-module is given by transitions `φ_ab` with
//! `φ_ab φ_bc φ_ca = ζ^{d e_abc}`, `ζ = exp(2πi/k)`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cech::{self, Cochain, Nerve, Ring};
use crate::clifford::{self, SpinElement, SpinorRep};
use crate::linalg::{self, max_abs};
use crate::{CMatrix, Error, RMatrix, Result, C64};

/// Tolerance for `g_ab g_bc g_ca = 1` at triple sample points.
pub const COCYCLE_TOLERANCE: f64 = 1e-10;
/// Tolerance for twisted module cocycles.
pub const MODULE_TOLERANCE: f64 = 1e-9;

/// Sample graph over one double overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSamples {
    /// `[a, b]` with `a < b`.
    pub edge: [usize; 2],
    /// Undirected adjacency lists over the sample nodes.
    pub adjacency: Vec<Vec<usize>>,
    pub basepoint: usize,
}

impl EdgeSamples {
    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Sample points of one triple overlap `[a, b, c]`, `a < b < c`.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleSamples {
    pub triple: [usize; 3],
    /// Node indices `[in ab, in bc, in ac]` of the same point; the first entry
    /// is the basepoint, the rest are spot checks.
    pub points: Vec<[usize; 3]>,
}

/// Combinatorics shared by transition data and module data.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleLayout {
    nerve: Nerve,
    edges: Vec<EdgeSamples>,
    triples: Vec<TripleSamples>,
}

impl SampleLayout {
    /// Edges and triples must follow the nerve's ordering of 1- and 2-simplices.
    pub fn new(nerve: Nerve, edges: Vec<EdgeSamples>, triples: Vec<TripleSamples>) -> Result<Self> {
        if edges.len() != nerve.count(1) {
            return Err(Error::DimensionMismatch {
                expected: nerve.count(1),
                found: edges.len(),
            });
        }
        if triples.len() != nerve.count(2) {
            return Err(Error::DimensionMismatch {
                expected: nerve.count(2),
                found: triples.len(),
            });
        }
        for (e, s) in edges.iter().zip(nerve.simplices(1)) {
            if e.edge[..] != s[..] {
                return Err(Error::invalid(format!("edge {:?} out of nerve order (expected {s:?})", e.edge)));
            }
            let n = e.node_count();
            if e.basepoint >= n || e.adjacency.iter().flatten().any(|&v| v >= n) {
                return Err(Error::invalid(format!("edge {:?}: node index out of range", e.edge)));
            }
            for (u, nb) in e.adjacency.iter().enumerate() {
                if nb.iter().any(|&v| !e.adjacency[v].contains(&u)) {
                    return Err(Error::invalid(format!("edge {:?}: adjacency is not symmetric", e.edge)));
                }
            }
            if !e.is_connected() {
                return Err(Error::invalid(format!("edge {:?}: sample graph is not connected", e.edge)));
            }
        }
        let layout = SampleLayout { nerve, edges, triples };
        for (t, s) in layout.triples.iter().zip(layout.nerve.simplices(2)) {
            if t.triple[..] != s[..] {
                return Err(Error::invalid(format!("triple {:?} out of nerve order", t.triple)));
            }
            if t.points.is_empty() {
                return Err(Error::invalid(format!("triple {:?} has no basepoint", t.triple)));
            }
            let ids = layout.triple_edges(t.triple);
            for p in &t.points {
                for (slot, &e) in ids.iter().enumerate() {
                    if p[slot] >= layout.edges[e].node_count() {
                        return Err(Error::invalid(format!("triple {:?}: node out of range", t.triple)));
                    }
                }
            }
        }
        Ok(layout)
    }

    /// One sample point per overlap: enough for locally constant data.
    pub fn single_point(nerve: Nerve) -> Self {
        let edges = nerve
            .simplices(1)
            .iter()
            .map(|s| EdgeSamples {
                edge: [s[0], s[1]],
                adjacency: vec![vec![]],
                basepoint: 0,
            })
            .collect();
        let triples = nerve
            .simplices(2)
            .iter()
            .map(|s| TripleSamples {
                triple: [s[0], s[1], s[2]],
                points: vec![[0, 0, 0]],
            })
            .collect();
        SampleLayout { nerve, edges, triples }
    }

    pub fn nerve(&self) -> &Nerve {
        &self.nerve
    }

    pub fn edges(&self) -> &[EdgeSamples] {
        &self.edges
    }

    pub fn triples(&self) -> &[TripleSamples] {
        &self.triples
    }

    /// Edge ids of `ab`, `bc`, `ac`.
    fn triple_edges(&self, t: [usize; 3]) -> [usize; 3] {
        let id = |a: usize, b: usize| self.nerve.index_of(&[a, b]).expect("faces of a nerve simplex");
        [id(t[0], t[1]), id(t[1], t[2]), id(t[0], t[2])]
    }

    /// The same layout with different edge basepoints.
    pub fn with_basepoints(&self, basepoints: &[usize]) -> Result<Self> {
        if basepoints.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                found: basepoints.len(),
            });
        }
        let mut out = self.clone();
        for (e, &b) in out.edges.iter_mut().zip(basepoints) {
            if b >= e.node_count() {
                return Err(Error::invalid("basepoint out of range"));
            }
            e.basepoint = b;
        }
        Ok(out)
    }
}

/// Sampled `SO(n)` transition functions of a principal bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionData {
    layout: SampleLayout,
    dimension: usize,
    matrices: Vec<Vec<RMatrix>>,
}

impl TransitionData {
    pub fn new(layout: SampleLayout, dimension: usize, matrices: Vec<Vec<RMatrix>>) -> Result<Self> {
        if matrices.len() != layout.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.edges.len(),
                found: matrices.len(),
            });
        }
        for (e, ms) in layout.edges.iter().zip(&matrices) {
            if ms.len() != e.node_count() {
                return Err(Error::DimensionMismatch {
                    expected: e.node_count(),
                    found: ms.len(),
                });
            }
            for g in ms {
                if g.shape() != (dimension, dimension) {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        found: g.nrows(),
                    });
                }
                let defect = linalg::max_abs_real(&(g.transpose() * g - RMatrix::identity(dimension, dimension)));
                if defect > 1e-9 || g.determinant() < 0.0 {
                    return Err(Error::invalid(format!("edge {:?}: sample is not in SO({dimension})", e.edge)));
                }
            }
        }
        let data = TransitionData {
            layout,
            dimension,
            matrices,
        };
        let residual = data.cocycle_residual();
        if residual > COCYCLE_TOLERANCE {
            return Err(Error::residual("transition cocycle g_ab g_bc g_ca = 1", residual, COCYCLE_TOLERANCE));
        }
        Ok(data)
    }

    /// Constant transitions `g` on every edge (one sample point per overlap).
    pub fn constant(nerve: Nerve, g: &RMatrix) -> Result<Self> {
        let layout = SampleLayout::single_point(nerve);
        let matrices = layout.edges.iter().map(|_| vec![g.clone()]).collect();
        Self::new(layout, g.nrows(), matrices)
    }

    pub fn layout(&self) -> &SampleLayout {
        &self.layout
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn matrices(&self) -> &[Vec<RMatrix>] {
        &self.matrices
    }

    /// Largest `|g_ab g_bc g_ac^{-1} - 1|` over all triple sample points.
    pub fn cocycle_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for t in &self.layout.triples {
            let [ab, bc, ac] = self.layout.triple_edges(t.triple);
            for p in &t.points {
                let prod = &self.matrices[ab][p[0]] * &self.matrices[bc][p[1]] * self.matrices[ac][p[2]].transpose();
                let id = RMatrix::identity(self.dimension, self.dimension);
                worst = worst.max(linalg::max_abs_real(&(prod - id)));
            }
        }
        worst
    }
}

/// Choices entering the lift; the class of `e` must not depend on them.
#[derive(Clone, Debug, Default)]
pub struct LiftOptions {
    /// Replacement basepoint per edge.
    pub basepoints: Option<Vec<usize>>,
    /// Per-edge global sign flip of the lift.
    pub flips: Vec<bool>,
    /// Seed for randomizing the spanning tree of every sample graph.
    pub tree_seed: Option<u64>,
}

/// Transition data with a lift `ĝ_ab` at every sample node.
#[derive(Clone, Debug)]
pub struct LiftedTransitionData {
    pub transitions: TransitionData,
    pub lifts: Vec<Vec<SpinElement>>,
}

/// The `Z_k` 2-cocycle of a lifting gerbe.
#[derive(Clone, Debug, PartialEq)]
pub struct GerbeCocycle {
    cochain: Cochain,
}

impl GerbeCocycle {
    pub fn new(cochain: Cochain, nerve: &Nerve) -> Result<Self> {
        if cochain.degree() != 2 || cochain.ring().modulus().is_none() {
            return Err(Error::invalid("a gerbe cocycle is a degree-2 Z_k cochain"));
        }
        if !cech::is_cocycle(&cochain, nerve)? {
            let nonzero = cech::coboundary(&cochain, nerve)?.values().iter().filter(|&&v| v != 0).count();
            return Err(Error::NotCocycle { nonzero });
        }
        Ok(GerbeCocycle { cochain })
    }

    pub fn trivial(nerve: &Nerve, k: u64) -> Result<Self> {
        Self::new(Cochain::zero(nerve, 2, Ring::from_modulus(k)?), nerve)
    }

    pub fn cochain(&self) -> &Cochain {
        &self.cochain
    }

    pub fn modulus(&self) -> u64 {
        self.cochain.ring().modulus().expect("Z_k cochain")
    }

    /// Whether `e = δb` for some `Z_k` 1-cochain `b`.
    pub fn is_trivial(&self, nerve: &Nerve) -> Result<bool> {
        Ok(cech::solve_coboundary(&self.cochain, nerve)?.is_some())
    }
}

/// Lifts every edge's samples to `Spin(n)` and reads off `e`.
pub fn lift_transitions(t: &TransitionData) -> Result<(LiftedTransitionData, GerbeCocycle)> {
    lift_transitions_with(t, &LiftOptions::default())
}

pub fn lift_transitions_with(t: &TransitionData, options: &LiftOptions) -> Result<(LiftedTransitionData, GerbeCocycle)> {
    let layout = match &options.basepoints {
        Some(b) => t.layout.with_basepoints(b)?,
        None => t.layout.clone(),
    };
    let mut rng = options.tree_seed.map(ChaCha8Rng::seed_from_u64);
    let mut lifts = Vec::with_capacity(layout.edges.len());
    for (e_id, (edge, samples)) in layout.edges.iter().zip(&t.matrices).enumerate() {
        let flip = options.flips.get(e_id).copied().unwrap_or(false);
        lifts.push(lift_edge(edge, samples, flip, rng.as_mut())?);
    }
    let nerve = layout.nerve();
    let mut values = Vec::with_capacity(layout.triples.len());
    for tri in &layout.triples {
        let [ab, bc, ac] = layout.triple_edges(tri.triple);
        let mut sign = None;
        for p in &tri.points {
            let prod = lifts[ab][p[0]].compose(&lifts[bc][p[1]]).compose(&lifts[ac][p[2]].inverse());
            let s = prod
                .central_sign(1e-8)
                .ok_or_else(|| Error::invalid(format!("triple {:?}: lifted cocycle is not central", tri.triple)))?;
            match sign {
                None => sign = Some(s),
                Some(prev) if prev != s => {
                    return Err(Error::invalid(format!(
                        "triple {:?}: e is not constant over the overlap",
                        tri.triple
                    )))
                }
                _ => {}
            }
        }
        values.push(if sign == Some(-1) { 1 } else { 0 });
    }
    let e = GerbeCocycle::new(Cochain::new(2, Ring::Mod(2), values)?, nerve)?;
    let transitions = TransitionData {
        layout,
        dimension: t.dimension,
        matrices: t.matrices.clone(),
    };
    Ok((LiftedTransitionData { transitions, lifts }, e))
}

fn lift_edge(
    edge: &EdgeSamples,
    samples: &[RMatrix],
    flip: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<SpinElement>> {
    let n = edge.node_count();
    let mut lifts: Vec<Option<SpinElement>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut start = clifford::lift_rotation(&samples[edge.basepoint])?;
    if flip {
        start = start.negated();
    }
    lifts[edge.basepoint] = Some(start);
    let mut order: Vec<Vec<usize>> = edge.adjacency.clone();
    if let Some(rng) = rng {
        for nb in order.iter_mut() {
            nb.shuffle(rng);
        }
    }
    let mut queue = VecDeque::from([edge.basepoint]);
    while let Some(u) = queue.pop_front() {
        let reference = lifts[u].clone().expect("visited");
        for &v in &order[u] {
            if lifts[v].is_none() {
                lifts[v] = Some(clifford::nearest_lift(&samples[v], &reference)?);
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    let lifts: Vec<SpinElement> = lifts
        .into_iter()
        .map(|l| l.ok_or_else(|| Error::invalid("sample graph is not connected")))
        .collect::<Result<_>>()?;
    // off-tree edges: the lift has to be flat along every graph edge
    for (u, nb) in edge.adjacency.iter().enumerate() {
        for &v in nb {
            if parent[v] == u || parent[u] == v {
                continue;
            }
            let propagated = clifford::nearest_lift(&samples[v], &lifts[u])?;
            if propagated.element().distance(lifts[v].element()) > 1e-6 {
                return Err(Error::Holonomy { edge: edge.edge });
            }
        }
    }
    Ok(lifts)
}

/// Transition data of a `Γ^d`-module.
#[derive(Clone, Debug, PartialEq)]
pub struct GerbeModuleData {
    modulus: u64,
    weight: u64,
    ranks: Vec<usize>,
    transitions: Vec<Vec<CMatrix>>,
    unitary: bool,
}

/// Outcome of [`verify_module`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuleCheck {
    pub holds: bool,
    pub residual: f64,
}

impl GerbeModuleData {
    /// `ranks[a]` is the rank over chart `a`; `transitions[edge][node]` is a
    /// `ranks[a] x ranks[b]` matrix for edge `[a, b]`.
    pub fn new(
        layout: &SampleLayout,
        modulus: u64,
        weight: i64,
        ranks: Vec<usize>,
        transitions: Vec<Vec<CMatrix>>,
    ) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::invalid("modulus must be at least 2"));
        }
        if ranks.len() != layout.nerve.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: layout.nerve.vertex_count(),
                found: ranks.len(),
            });
        }
        if transitions.len() != layout.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.edges.len(),
                found: transitions.len(),
            });
        }
        let mut unitary = true;
        for (e, ms) in layout.edges.iter().zip(&transitions) {
            if ms.len() != e.node_count() {
                return Err(Error::DimensionMismatch {
                    expected: e.node_count(),
                    found: ms.len(),
                });
            }
            let shape = (ranks[e.edge[0]], ranks[e.edge[1]]);
            for phi in ms {
                if phi.shape() != shape {
                    return Err(Error::invalid(format!(
                        "edge {:?}: transition has shape {:?}, expected {shape:?}",
                        e.edge,
                        phi.shape()
                    )));
                }
                if shape.0 != shape.1 || linalg::try_inverse(phi).is_none() {
                    return Err(Error::invalid(format!("edge {:?}: transition is not invertible", e.edge)));
                }
                unitary &= max_abs(&(phi.adjoint() * phi - linalg::identity(shape.0))) < 1e-10;
            }
        }
        Ok(GerbeModuleData {
            modulus,
            weight: weight.rem_euclid(modulus as i64) as u64,
            ranks,
            transitions,
            unitary,
        })
    }

    /// Rank-`r` module with identity transitions.
    pub fn trivial(layout: &SampleLayout, modulus: u64, rank: usize) -> Result<Self> {
        let transitions = layout
            .edges
            .iter()
            .map(|e| vec![linalg::identity(rank); e.node_count()])
            .collect();
        Self::new(layout, modulus, 0, vec![rank; layout.nerve.vertex_count()], transitions)
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Rank over chart 0.
    pub fn rank(&self) -> usize {
        self.ranks.first().copied().unwrap_or(0)
    }

    pub fn transitions(&self) -> &[Vec<CMatrix>] {
        &self.transitions
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// The module with every transition multiplied by `scalars[edge]`.
    pub fn rescaled(&self, layout: &SampleLayout, scalars: &[C64]) -> Result<Self> {
        let transitions = self
            .transitions
            .iter()
            .zip(scalars)
            .map(|(ms, &s)| ms.iter().map(|m| m * s).collect())
            .collect();
        Self::new(layout, self.modulus, self.weight as i64, self.ranks.clone(), transitions)
    }

    /// The module with all transitions on one edge negated.
    pub fn with_negated_edge(&self, layout: &SampleLayout, edge: usize) -> Result<Self> {
        let mut scalars = vec![C64::new(1.0, 0.0); self.transitions.len()];
        scalars[edge] = C64::new(-1.0, 0.0);
        self.rescaled(layout, &scalars)
    }
}

fn zeta_power(k: u64, power: u64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * (power % k) as f64 / k as f64)
}

/// Checks `φ_ab φ_bc φ_ca = ζ^{d e_abc}` at every triple sample point.
pub fn verify_module(m: &GerbeModuleData, e: &GerbeCocycle, layout: &SampleLayout) -> Result<ModuleCheck> {
    if m.transitions.len() != layout.edges.len() || m.ranks.len() != layout.nerve.vertex_count() {
        return Err(Error::invalid("module does not match the layout"));
    }
    if e.cochain().values().len() != layout.triples.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.triples.len(),
            found: e.cochain().values().len(),
        });
    }
    let k = e.modulus();
    if k != m.modulus {
        return Err(Error::invalid(format!("module is over Z_{}, cocycle over Z_{k}", m.modulus)));
    }
    let mut residual = 0.0f64;
    for (tri, &ev) in layout.triples.iter().zip(e.cochain().values()) {
        let [ab, bc, ac] = layout.triple_edges(tri.triple);
        let r = m.ranks[tri.triple[0]];
        let expected = linalg::identity(r) * zeta_power(k, m.weight * ev as u64);
        for p in &tri.points {
            let inv = linalg::try_inverse(&m.transitions[ac][p[2]])
                .ok_or_else(|| Error::invalid("singular transition"))?;
            let prod = &m.transitions[ab][p[0]] * &m.transitions[bc][p[1]] * inv;
            residual = residual.max(max_abs(&(prod - &expected)));
        }
    }
    Ok(ModuleCheck {
        holds: residual < MODULE_TOLERANCE,
        residual,
    })
}

fn same_shape(m1: &GerbeModuleData, m2: &GerbeModuleData) -> Result<()> {
    if m1.modulus != m2.modulus {
        return Err(Error::invalid("modules are over different Z_k"));
    }
    if m1.transitions.len() != m2.transitions.len()
        || m1.ranks.len() != m2.ranks.len()
        || m1
            .transitions
            .iter()
            .zip(&m2.transitions)
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::invalid("modules live on different nerves or sample layouts"));
    }
    Ok(())
}

/// `Γ^{d1} (x) Γ^{d2} -> Γ^{d1+d2}`: transitions `φ (x) φ'`.
pub fn tensor_modules(m1: &GerbeModuleData, m2: &GerbeModuleData) -> Result<GerbeModuleData> {
    same_shape(m1, m2)?;
    let transitions = m1
        .transitions
        .iter()
        .zip(&m2.transitions)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.kronecker(y)).collect())
        .collect();
    Ok(GerbeModuleData {
        modulus: m1.modulus,
        weight: (m1.weight + m2.weight) % m1.modulus,
        ranks: m1.ranks.iter().zip(&m2.ranks).map(|(a, b)| a * b).collect(),
        transitions,
        unitary: m1.unitary && m2.unitary,
    })
}

/// Block-diagonal sum of two modules of equal weight.
pub fn direct_sum(m1: &GerbeModuleData, m2: &GerbeModuleData) -> Result<GerbeModuleData> {
    same_shape(m1, m2)?;
    if m1.weight != m2.weight {
        return Err(Error::invalid(format!(
            "direct sums need equal weights, got {} and {}",
            m1.weight, m2.weight
        )));
    }
    let transitions = m1
        .transitions
        .iter()
        .zip(&m2.transitions)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| linalg::block_diagonal(x, y)).collect())
        .collect();
    Ok(GerbeModuleData {
        modulus: m1.modulus,
        weight: m1.weight,
        ranks: m1.ranks.iter().zip(&m2.ranks).map(|(a, b)| a + b).collect(),
        transitions,
        unitary: m1.unitary && m2.unitary,
    })
}

/// `End(W)` as a weight-0 module: `ψ -> φ ψ φ^{-1}`, acting on column-major
/// `vec(ψ)` as `φ^{-T} (x) φ`.
pub fn endomorphism_descent(m: &GerbeModuleData) -> Result<GerbeModuleData> {
    let transitions = m
        .transitions
        .iter()
        .map(|ms| {
            ms.iter()
                .map(|phi| {
                    let inv = linalg::try_inverse(phi).ok_or_else(|| Error::invalid("singular transition"))?;
                    Ok(inv.transpose().kronecker(phi))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GerbeModuleData {
        modulus: m.modulus,
        weight: 0,
        ranks: m.ranks.iter().map(|r| r * r).collect(),
        transitions,
        unitary: m.unitary,
    })
}

/// Splits transitions that are twisted by a `Z_k` action,
/// `φ_ab φ_bc φ_ca = A_a^{e_abc}`, into weight summands
/// (eigenspaces `A = ζ^d`), each a `Γ^d`-module. Summands come in increasing
/// `d`; empty ones are skipped.
pub fn weight_decompose(
    layout: &SampleLayout,
    e: &GerbeCocycle,
    actions: &[CMatrix],
    transitions: &[Vec<CMatrix>],
) -> Result<Vec<GerbeModuleData>> {
    let k = e.modulus();
    let charts = layout.nerve.vertex_count();
    if actions.len() != charts {
        return Err(Error::DimensionMismatch {
            expected: charts,
            found: actions.len(),
        });
    }
    for (edge, ms) in layout.edges.iter().zip(transitions) {
        let [a, b] = edge.edge;
        for phi in ms {
            let defect = max_abs(&(phi * &actions[b] - &actions[a] * phi));
            if defect > 1e-10 {
                return Err(Error::residual("Z_k action commuting with transitions", defect, 1e-10));
            }
        }
    }
    let ranks: Vec<usize> = actions.iter().map(|a| a.nrows()).collect();
    // spectral projectors P_d = (1/k) sum_j ζ^{-dj} A^j
    let mut out = Vec::new();
    for d in 0..k {
        let mut bases = Vec::with_capacity(charts);
        let mut left = Vec::with_capacity(charts);
        for a in actions {
            let r = a.nrows();
            let mut proj = CMatrix::zeros(r, r);
            let mut power = linalg::identity(r);
            for j in 0..k {
                proj += &power * zeta_power(k, (k - d % k) * j % k);
                power = &power * a;
            }
            if max_abs(&(&power - linalg::identity(r))) > 1e-10 {
                return Err(Error::invalid("action does not satisfy A^k = 1"));
            }
            proj /= C64::new(k as f64, 0.0);
            let dim = proj.trace().re.round() as usize;
            let svd = proj.clone().svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&x, &y| svd.singular_values[y].partial_cmp(&svd.singular_values[x]).unwrap());
            let mut basis = CMatrix::zeros(r, dim);
            for (c, &i) in order.iter().take(dim).enumerate() {
                basis.set_column(c, &u.column(i));
            }
            let pinv = (basis.adjoint() * &basis)
                .try_inverse()
                .map(|g| g * basis.adjoint())
                .unwrap_or_else(|| CMatrix::zeros(dim, r));
            left.push(pinv * proj);
            bases.push(basis);
        }
        let sub_ranks: Vec<usize> = bases.iter().map(|b| b.ncols()).collect();
        if sub_ranks.iter().all(|&r| r == 0) {
            continue;
        }
        let sub_transitions: Vec<Vec<CMatrix>> = layout
            .edges
            .iter()
            .zip(transitions)
            .map(|(edge, ms)| {
                let [a, b] = edge.edge;
                ms.iter().map(|phi| &left[a] * phi * &bases[b]).collect()
            })
            .collect();
        let module = GerbeModuleData::new(layout, k, d as i64, sub_ranks, sub_transitions)?;
        let check = verify_module(&module, e, layout)?;
        if !check.holds {
            return Err(Error::residual("weight summand twisted cocycle", check.residual, MODULE_TOLERANCE));
        }
        out.push(module);
    }
    if out.iter().map(|m| m.rank()).sum::<usize>() != ranks[0] {
        return Err(Error::invalid("weight summands do not exhaust the module"));
    }
    Ok(out)
}

/// Ordinary vector bundle transition data (untwisted Čech cocycle).
#[derive(Clone, Debug, PartialEq)]
pub struct BundleTransitions {
    pub ranks: Vec<usize>,
    pub transitions: Vec<Vec<CMatrix>>,
    pub residual: f64,
}

/// A weight-0 module is a bundle on `M`.
pub fn descend_weight_zero(m: &GerbeModuleData, layout: &SampleLayout) -> Result<BundleTransitions> {
    if m.weight != 0 {
        return Err(Error::invalid(format!(
            "a module of weight {} does not descend to M",
            m.weight
        )));
    }
    let e = GerbeCocycle::trivial(&layout.nerve, m.modulus)?;
    let check = verify_module(m, &e, layout)?;
    if !check.holds {
        return Err(Error::residual("untwisted bundle cocycle", check.residual, MODULE_TOLERANCE));
    }
    Ok(BundleTransitions {
        ranks: m.ranks.clone(),
        transitions: m.transitions.clone(),
        residual: check.residual,
    })
}

/// `Σ_P`: transitions `represent(ĝ_ab)`, weight 1 over `Z_2`.
pub fn spin_module(lifted: &LiftedTransitionData) -> Result<GerbeModuleData> {
    let rep = SpinorRep::new(lifted.transitions.dimension)?;
    spin_module_block(lifted, &rep, None)
}

/// Half-spin modules `Σ_P^+` and `Σ_P^-` (even elements preserve chirality).
pub fn half_spin_modules(lifted: &LiftedTransitionData) -> Result<(GerbeModuleData, GerbeModuleData)> {
    let rep = SpinorRep::new(lifted.transitions.dimension)?;
    Ok((
        spin_module_block(lifted, &rep, Some(rep.chiral_indices(true)))?,
        spin_module_block(lifted, &rep, Some(rep.chiral_indices(false)))?,
    ))
}

fn spin_module_block(lifted: &LiftedTransitionData, rep: &SpinorRep, block: Option<Vec<usize>>) -> Result<GerbeModuleData> {
    let layout = &lifted.transitions.layout;
    let transitions = lifted
        .lifts
        .iter()
        .map(|ls| {
            ls.iter()
                .map(|g| {
                    let m = rep.represent(g.element())?;
                    Ok(match &block {
                        Some(idx) => m.select_rows(idx).select_columns(idx),
                        None => m,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let r = block.as_ref().map(|b| b.len()).unwrap_or(rep.spinor_dimension());
    GerbeModuleData::new(layout, 2, 1, vec![r; layout.nerve.vertex_count()], transitions)
}

/// Frame of the tangent plane of `S^2` at `p` from stereographic chart
/// coordinates centered at `c` (basis `a, b, c` right-handed): `f1` along
/// `∂_u`, `f2 = p × f1`.
fn stereographic_frame(basis: &[[f64; 3]; 3], p: [f64; 3]) -> [[f64; 3]; 2] {
    let [a, b, c] = basis;
    let dot = |x: &[f64; 3], y: &[f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let denom = 1.0 + dot(&p, c);
    let u = dot(&p, a) / denom;
    let v = dot(&p, b) / denom;
    let s = u * u + v * v;
    let mut du = [0.0; 3];
    for i in 0..3 {
        let num = 2.0 * u * a[i] + 2.0 * v * b[i] + (1.0 - s) * c[i];
        du[i] = (2.0 * a[i] - 2.0 * u * c[i]) / (1.0 + s) - 2.0 * u * num / ((1.0 + s) * (1.0 + s));
    }
    let f1 = normalize(du);
    let f2 = cross(p, f1);
    [f1, f2]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn combine(terms: &[(f64, [f64; 3])]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (s, v) in terms {
        for i in 0..3 {
            out[i] += s * v[i];
        }
    }
    out
}

/// Angular radius of the caps of the four-chart cover of `S^2`.
pub const S2_CAP_RADIUS_DEG: f64 = 80.0;

/// The four-cap good cover of `S^2` centered at the vertices of a regular
/// tetrahedron; its nerve is the boundary of the tetrahedron.
pub struct S2TetraCover {
    centers: [[f64; 3]; 4],
    bases: [[[f64; 3]; 3]; 4],
}

impl Default for S2TetraCover {
    fn default() -> Self {
        Self::new()
    }
}

impl S2TetraCover {
    pub fn new() -> Self {
        let s = 1.0 / 3f64.sqrt();
        let centers = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
        let bases = centers.map(|c| {
            let seed = if c[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
            let a = normalize(combine(&[(1.0, seed), (-dot3(seed, c), c)]));
            let b = cross(c, a);
            [a, b, c]
        });
        S2TetraCover { centers, bases }
    }

    pub fn centers(&self) -> &[[f64; 3]; 4] {
        &self.centers
    }

    pub fn contains(&self, chart: usize, p: [f64; 3]) -> bool {
        dot3(p, self.centers[chart]) > S2_CAP_RADIUS_DEG.to_radians().cos()
    }

    /// Tangent frame of chart `a` at `p`.
    pub fn frame(&self, chart: usize, p: [f64; 3]) -> [[f64; 3]; 2] {
        stereographic_frame(&self.bases[chart], p)
    }

    /// `g_ab(p)[j][i] = <f^a_j, f^b_i>`.
    pub fn transition(&self, a: usize, b: usize, p: [f64; 3]) -> RMatrix {
        let fa = self.frame(a, p);
        let fb = self.frame(b, p);
        RMatrix::from_fn(2, 2, |j, i| dot3(fa[j], fb[i]))
    }

    /// Curvilinear `side x side` grid over the lens `U_a ∩ U_b`, in coordinates
    /// along and across the bisecting great circle.
    fn lens_grid(&self, a: usize, b: usize, side: usize) -> Vec<[f64; 3]> {
        let (va, vb) = (self.centers[a], self.centers[b]);
        let cos_r = S2_CAP_RADIUS_DEG.to_radians().cos();
        let m = normalize(combine(&[(1.0, va), (1.0, vb)]));
        let w = normalize(cross(va, vb));
        let across = normalize(combine(&[(1.0, va), (-1.0, vb)]));
        let phi_max = (cos_r / dot3(m, va)).acos();
        let frac = |i: usize| -0.95 + 1.9 * i as f64 / (side - 1) as f64;
        let mut points = Vec::with_capacity(side * side);
        for i in 0..side {
            let phi = frac(i) * phi_max;
            let center = combine(&[(phi.cos(), m), (phi.sin(), w)]);
            let big_a = dot3(center, va);
            let big_b = dot3(across, va);
            let psi_max = (cos_r / big_a.hypot(big_b)).acos() - big_b.atan2(big_a);
            for j in 0..side {
                let psi = frac(j) * psi_max;
                points.push(normalize(combine(&[(psi.cos(), center), (psi.sin(), across)])));
            }
        }
        points
    }

    /// Face center of the triple `t` and three nearby points, all inside the
    /// triple overlap.
    fn triple_points(&self, t: [usize; 3]) -> Vec<[f64; 3]> {
        let center = normalize(combine(&[(1.0, self.centers[t[0]]), (1.0, self.centers[t[1]]), (1.0, self.centers[t[2]])]));
        let mut pts = vec![center];
        for &v in &t {
            let toward = normalize(combine(&[(1.0, self.centers[v]), (-dot3(self.centers[v], center), center)]));
            pts.push(normalize(combine(&[(1.0, center), (0.05, toward)])));
        }
        pts
    }

    /// Sampled frame-bundle transition data; `side^2` grid nodes per overlap
    /// plus the triple points.
    pub fn frame_transitions(&self, side: usize) -> Result<TransitionData> {
        if side < 2 {
            return Err(Error::invalid("lens grid needs at least 2 points per side"));
        }
        let nerve = cech::tetrahedron_boundary();
        let mut edge_points: Vec<Vec<[f64; 3]>> = Vec::new();
        let mut edges = Vec::new();
        for s in nerve.simplices(1) {
            let (a, b) = (s[0], s[1]);
            let pts = self.lens_grid(a, b, side);
            let mut adjacency = vec![Vec::new(); pts.len()];
            for i in 0..side {
                for j in 0..side {
                    let u = i * side + j;
                    if j + 1 < side {
                        adjacency[u].push(u + 1);
                        adjacency[u + 1].push(u);
                    }
                    if i + 1 < side {
                        adjacency[u].push(u + side);
                        adjacency[u + side].push(u);
                    }
                }
            }
            let center = (side / 2) * side + side / 2;
            edge_points.push(pts);
            edges.push(EdgeSamples {
                edge: [a, b],
                adjacency,
                basepoint: center,
            });
        }
        let mut triples = Vec::new();
        for s in nerve.simplices(2) {
            let t = [s[0], s[1], s[2]];
            let pairs = [[t[0], t[1]], [t[1], t[2]], [t[0], t[2]]];
            let mut points = Vec::new();
            for p in self.triple_points(t) {
                if !t.iter().all(|&c| self.contains(c, p)) {
                    return Err(Error::invalid("triple point outside the triple overlap"));
                }
                let mut ids = [0usize; 3];
                for (slot, pair) in pairs.iter().enumerate() {
                    let e = nerve.index_of(pair).expect("edge of the tetrahedron");
                    ids[slot] = attach_point(&mut edge_points[e], &mut edges[e].adjacency, p, side * side, 2);
                }
                points.push(ids);
            }
            triples.push(TripleSamples { triple: t, points });
        }
        let matrices = edges
            .iter()
            .zip(&edge_points)
            .map(|(e, pts)| pts.iter().map(|&p| self.transition(e.edge[0], e.edge[1], p)).collect())
            .collect();
        let layout = SampleLayout::new(nerve, edges, triples)?;
        TransitionData::new(layout, 2, matrices)
    }
}

/// Adds `p` as a new node linked to its `links` nearest grid nodes.
fn attach_point(points: &mut Vec<[f64; 3]>, adjacency: &mut Vec<Vec<usize>>, p: [f64; 3], grid: usize, links: usize) -> usize {
    let mut by_distance: Vec<usize> = (0..grid).collect();
    by_distance.sort_by(|&x, &y| dot3(points[y], p).partial_cmp(&dot3(points[x], p)).unwrap());
    let id = points.len();
    points.push(p);
    adjacency.push(Vec::new());
    for &n in by_distance.iter().take(links) {
        adjacency[id].push(n);
        adjacency[n].push(id);
    }
    id
}

/// Default number of grid points per side of each overlap (64 samples).
pub const S2_GRID_SIDE: usize = 8;

/// Frame-bundle transition data of `S^2` on the four-cap cover.
pub fn s2_frame_transitions() -> Result<TransitionData> {
    S2TetraCover::new().frame_transitions(S2_GRID_SIDE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> RMatrix {
        RMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn identity_transitions_lift_trivially() {
        let t = TransitionData::constant(cech::tetrahedron_boundary(), &RMatrix::identity(3, 3)).unwrap();
        let (lifted, e) = lift_transitions(&t).unwrap();
        assert!(e.cochain().is_zero());
        for ls in &lifted.lifts {
            assert_eq!(ls[0].central_sign(1e-12), Some(1));
        }
    }

    #[test]
    fn s2_frame_cocycle_is_a_coboundary() {
        let t = s2_frame_transitions().unwrap();
        assert!(t.cocycle_residual() < 1e-12);
        assert_eq!(t.layout().edges()[0].node_count(), 64 + 4 * 2);
        let (lifted, e) = lift_transitions(&t).unwrap();
        let nerve = t.layout().nerve();
        assert!(cech::is_cocycle(e.cochain(), nerve).unwrap());
        assert!(e.is_trivial(nerve).unwrap());
        for (ls, ms) in lifted.lifts.iter().zip(t.matrices()) {
            for (l, g) in ls.iter().zip(ms) {
                assert!(linalg::max_abs_real(&(clifford::adjoint_projection(l) - g)) < 1e-9);
            }
        }
    }

    #[test]
    fn sign_flip_changes_e_by_a_coboundary() {
        let t = s2_frame_transitions().unwrap();
        let nerve = t.layout().nerve().clone();
        let (_, e0) = lift_transitions(&t).unwrap();
        let options = LiftOptions {
            flips: vec![false, false, true, false, false, false],
            ..Default::default()
        };
        let (_, e1) = lift_transitions_with(&t, &options).unwrap();
        let mut indicator = vec![0; 6];
        indicator[2] = 1;
        let delta = cech::coboundary(&Cochain::new(1, Ring::Mod(2), indicator).unwrap(), &nerve).unwrap();
        assert_eq!(e0.cochain().add(&delta).unwrap(), *e1.cochain());
    }

    #[test]
    fn holonomy_on_an_overlap_is_detected() {
        // a single overlap whose samples wind once around SO(2)
        let nerve = Nerve::new(2, &[vec![0, 1]]).unwrap();
        let n = 32;
        let adjacency = (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
        let layout = SampleLayout::new(
            nerve,
            vec![EdgeSamples {
                edge: [0, 1],
                adjacency,
                basepoint: 0,
            }],
            vec![],
        )
        .unwrap();
        let matrices = vec![(0..n).map(|i| rotation(2.0 * PI * i as f64 / n as f64)).collect()];
        let t = TransitionData::new(layout, 2, matrices).unwrap();
        assert!(matches!(lift_transitions(&t), Err(Error::Holonomy { .. })));
    }

    #[test]
    fn sparse_samples_are_rejected() {
        let nerve = Nerve::new(2, &[vec![0, 1]]).unwrap();
        let layout = SampleLayout::new(
            nerve,
            vec![EdgeSamples {
                edge: [0, 1],
                adjacency: vec![vec![1], vec![0]],
                basepoint: 0,
            }],
            vec![],
        )
        .unwrap();
        let t = TransitionData::new(layout, 2, vec![vec![rotation(0.0), rotation(2.0)]]).unwrap();
        assert!(matches!(lift_transitions(&t), Err(Error::LiftAmbiguity { .. })));
    }

    #[test]
    fn broken_cocycles_are_rejected() {
        let nerve = cech::tetrahedron_boundary();
        let layout = SampleLayout::single_point(nerve);
        let mut matrices: Vec<Vec<RMatrix>> = layout.edges().iter().map(|_| vec![RMatrix::identity(2, 2)]).collect();
        matrices[0][0] = rotation(0.3);
        assert!(TransitionData::new(layout, 2, matrices).is_err());
    }

    fn s2_spin() -> (TransitionData, LiftedTransitionData, GerbeCocycle, GerbeModuleData) {
        let t = s2_frame_transitions().unwrap();
        let (lifted, e) = lift_transitions(&t).unwrap();
        let spin = spin_module(&lifted).unwrap();
        (t, lifted, e, spin)
    }

    #[test]
    fn spin_module_is_twisted_by_e() {
        let (t, _, e, spin) = s2_spin();
        assert_eq!(spin.weight(), 1);
        assert!(spin.is_unitary());
        let check = verify_module(&spin, &e, t.layout()).unwrap();
        assert!(check.holds, "residual {}", check.residual);
    }

    #[test]
    fn negated_edge_and_weight_bookkeeping() {
        let (t, _, e, spin) = s2_spin();
        let layout = t.layout();
        let flipped = spin.with_negated_edge(layout, 1).unwrap();
        let mut indicator = vec![0; 6];
        indicator[1] = 1;
        let delta = cech::coboundary(&Cochain::new(1, Ring::Mod(2), indicator).unwrap(), layout.nerve()).unwrap();
        let e_flipped = GerbeCocycle::new(e.cochain().add(&delta).unwrap(), layout.nerve()).unwrap();
        assert!(verify_module(&flipped, &e_flipped, layout).unwrap().holds);
        // a weight-0 module does not absorb the sign
        let trivial = GerbeModuleData::trivial(layout, 2, 1).unwrap().with_negated_edge(layout, 1).unwrap();
        assert!(!verify_module(&trivial, &e_flipped, layout).unwrap().holds);
    }

    #[test]
    fn tensor_of_two_weight_one_modules_has_weight_zero() {
        let (t, _, e, spin) = s2_spin();
        let layout = t.layout();
        let sq = tensor_modules(&spin, &spin).unwrap();
        assert_eq!(sq.weight(), 0);
        assert_eq!(sq.rank(), 4);
        assert!(verify_module(&sq, &e, layout).unwrap().holds);
        assert!(descend_weight_zero(&sq, layout).is_ok());
        let unit = GerbeModuleData::trivial(layout, 2, 1).unwrap();
        let same = tensor_modules(&spin, &unit).unwrap();
        assert_eq!(same.transitions(), spin.transitions());
        assert!(descend_weight_zero(&spin, layout).is_err());
    }

    #[test]
    fn half_spin_sum_is_spin() {
        let (t, lifted, e, spin) = s2_spin();
        let (plus, minus) = half_spin_modules(&lifted).unwrap();
        assert!(verify_module(&plus, &e, t.layout()).unwrap().holds);
        let sum = direct_sum(&plus, &minus).unwrap();
        // chirality is diagonal with + first for n = 2
        for (a, b) in sum.transitions().iter().flatten().zip(spin.transitions().iter().flatten()) {
            assert!(max_abs(&(a - b)) < 1e-14);
        }
        let unit = GerbeModuleData::trivial(t.layout(), 2, 1).unwrap();
        assert!(direct_sum(&plus, &unit).is_err());
    }

    #[test]
    fn endomorphisms_descend() {
        let (t, _, e, spin) = s2_spin();
        let layout = t.layout();
        let end = endomorphism_descent(&spin).unwrap();
        assert_eq!(end.weight(), 0);
        assert!(verify_module(&end, &GerbeCocycle::trivial(layout.nerve(), 2).unwrap(), layout).unwrap().holds);
        let scaled = spin
            .rescaled(layout, &[C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(-1.0, 0.0)])
            .unwrap();
        let end2 = endomorphism_descent(&scaled).unwrap();
        for (a, b) in end.transitions().iter().flatten().zip(end2.transitions().iter().flatten()) {
            assert!(max_abs(&(a - b)) < 1e-14);
        }
        let _ = e;
        let line = GerbeModuleData::trivial(layout, 2, 1).unwrap().rescaled(layout, &[C64::new(0.0, 1.0); 6]).unwrap();
        let end_line = endomorphism_descent(&line).unwrap();
        assert!(end_line.transitions().iter().flatten().all(|m| max_abs(&(m - linalg::identity(1))) < 1e-15));
    }

    #[test]
    fn weight_decomposition_of_block_action() {
        let (t, _, e, spin) = s2_spin();
        let layout = t.layout();
        let unit = GerbeModuleData::trivial(layout, 2, 1).unwrap();
        // W = C (weight 0) (+) Σ (weight 1), twisted by A = diag(1, -1, -1)
        let transitions: Vec<Vec<CMatrix>> = unit
            .transitions()
            .iter()
            .zip(spin.transitions())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| linalg::block_diagonal(x, y)).collect())
            .collect();
        let mut action = linalg::identity(3);
        action[(1, 1)] = C64::new(-1.0, 0.0);
        action[(2, 2)] = C64::new(-1.0, 0.0);
        let parts = weight_decompose(layout, &e, &vec![action; 4], &transitions).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!((parts[0].weight(), parts[0].rank()), (0, 1));
        assert_eq!((parts[1].weight(), parts[1].rank()), (1, 2));
        // identity action: one summand of weight 0
        let single = weight_decompose(layout, &e, &vec![linalg::identity(1); 4], unit.transitions()).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].weight(), 0);
        let minus = weight_decompose(layout, &e, &vec![-linalg::identity(2); 4], spin.transitions()).unwrap();
        assert_eq!(minus.len(), 1);
        assert_eq!(minus[0].weight(), 1);
    }
}
