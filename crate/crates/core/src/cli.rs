//! The `gerbedex` command line harness.
//!
//! ```text
//! gerbedex <clifford-check|cech|gerbe|chern|index|all> [--manifold S2|T2|CP2]
//!     [--flux M] [--grid-order Q] [--lattice-size N] [--seed S] [--in FILE] [--out FILE]
//! ```
//!
//! Every subcommand prints (or writes to `--out`) one JSON report with sorted
//! keys and a top-level `passed` flag. Exit codes: `0` all checks passed, `1`
//! a check failed, `2` bad flags or unreadable input. Output depends only on
//! the flags, so repeated runs with the same `--seed` are byte-identical.
//! `GERBEDEX_QUAD_ORDER` overrides the default quadrature order when
//! `--grid-order` is absent.
//!
//! # Nerve files
//!
//! Line based; `#` starts a comment.
//!
//! ```text
//! ring Z_3            # Z, Z_k or k (0 means Z); default Z
//! simplex 0 1 2       # a simplex, faces are added automatically
//! degree 2            # degree of the optional cochain; default from the first value line
//! value 0 1 2 = 1     # cochain value on a simplex (others are 0)
//! ```
//!
//! # Manifests
//!
//! JSON objects with `format_version` (1), `nerve` (`vertex_count`,
//! `simplices`), `dimension`, `edges` (`edge`, `adjacency`, `basepoint`,
//! `matrices`), `triples` (`triple`, `points`), and optional `modules`
//! (`name`, `modulus`, `weight`, `ranks`, `transitions`), `connections`
//! (`manifold`, `module`) and `tasks`. Matrices are row-major arrays of
//! `[re, im]` pairs. Edges and triples follow the nerve's lexicographic order.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cech::{self, Cochain, Nerve, Ring};
use crate::characteristic;
use crate::clifford::{self, CliffordModuleFiber, SpinElement, SpinorRep};
use crate::geometry::{self, benchmark_registry, Manifold};
use crate::gerbe::{self, EdgeSamples, GerbeModuleData, LiftOptions, SampleLayout, TransitionData, TripleSamples};
use crate::spectral::{self, CompareParams};
use crate::{CMatrix, Error, RMatrix, Result, C64};

const SHIPPED: &[(&str, &str)] = &[
    ("tetra_s2.nerve", include_str!("../data/tetra_s2.nerve")),
    ("rp2.nerve", include_str!("../data/rp2.nerve")),
    ("lens_k3.nerve", include_str!("../data/lens_k3.nerve")),
    ("torus7.nerve", include_str!("../data/torus7.nerve")),
    ("s2_frame.json", include_str!("../data/s2_frame.json")),
];

/// Names of the data files compiled into the binary.
pub fn shipped_names() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// Contents of a shipped data file.
pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

/// Reads `input` from disk if it exists, else from the shipped data.
pub fn load_input(input: &str) -> Result<(String, String)> {
    let path = Path::new(input);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((name, text));
    }
    shipped(input)
        .map(|t| (input.to_string(), t.to_string()))
        .ok_or_else(|| Error::Unknown {
            kind: "input file",
            name: input.to_string(),
        })
}

/// Parsed nerve file.
#[derive(Clone, Debug, PartialEq)]
pub struct NerveFile {
    pub nerve: Nerve,
    pub ring: Ring,
    pub cochain: Option<Cochain>,
}

fn parse_ring(word: &str) -> std::result::Result<Ring, String> {
    let w = word.trim();
    if w == "Z" {
        return Ok(Ring::Integers);
    }
    let digits = w.strip_prefix("Z_").unwrap_or(w);
    let k: u64 = digits.parse().map_err(|_| format!("bad ring `{word}`"))?;
    Ring::from_modulus(k).map_err(|e| e.to_string())
}

/// Parses the nerve text format.
pub fn parse_nerve_file(text: &str) -> Result<NerveFile> {
    let mut ring = Ring::Integers;
    let mut simplices: Vec<Vec<usize>> = Vec::new();
    let mut degree: Option<usize> = None;
    let mut values: Vec<(usize, Vec<usize>, i64)> = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let vertices = |line: usize, words: &[&str]| {
        words
            .iter()
            .map(|w| w.parse::<usize>().map_err(|_| parse_err(line, format!("bad vertex `{w}`"))))
            .collect::<Result<Vec<_>>>()
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        match words[0] {
            "ring" if words.len() == 2 => ring = parse_ring(words[1]).map_err(|m| parse_err(line, m))?,
            "simplex" if words.len() >= 2 => simplices.push(vertices(line, &words[1..])?),
            "degree" if words.len() == 2 => {
                degree = Some(words[1].parse().map_err(|_| parse_err(line, "bad degree".into()))?)
            }
            "value" => {
                let eq = words
                    .iter()
                    .position(|w| *w == "=")
                    .ok_or_else(|| parse_err(line, "value line needs `=`".into()))?;
                if eq < 2 || eq + 2 != words.len() {
                    return Err(parse_err(line, "expected `value v0 .. vq = x`".into()));
                }
                let mut s = vertices(line, &words[1..eq])?;
                s.sort_unstable();
                let x: i64 = words[eq + 1].parse().map_err(|_| parse_err(line, "bad value".into()))?;
                values.push((line, s, x));
            }
            other => return Err(parse_err(line, format!("unknown or malformed directive `{other}`"))),
        }
    }
    if simplices.is_empty() {
        return Err(parse_err(0, "no simplices".into()));
    }
    let vertex_count = simplices.iter().flatten().max().map(|v| v + 1).unwrap_or(0);
    let nerve = Nerve::new(vertex_count, &simplices)?;
    let degree = degree.or_else(|| values.first().map(|(_, s, _)| s.len() - 1));
    let cochain = match degree {
        None => None,
        Some(q) => {
            let mut vals = vec![0i64; nerve.count(q)];
            for (line, s, x) in &values {
                if s.len() != q + 1 {
                    return Err(parse_err(*line, format!("value simplex has the wrong degree (expected {q})")));
                }
                let id = nerve
                    .index_of(s)
                    .ok_or_else(|| parse_err(*line, format!("{s:?} is not a simplex of the nerve")))?;
                vals[id] = *x;
            }
            Some(Cochain::new(q, ring, vals)?)
        }
    };
    Ok(NerveFile { nerve, ring, cochain })
}

/// Writes a nerve file listing the top-dimensional simplices.
pub fn format_nerve_file(comment: &str, nerve: &Nerve, ring: Ring, cochain: Option<&Cochain>) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str(&format!("# {line}\n"));
    }
    let ring_word = match ring.modulus() {
        None => "Z".to_string(),
        Some(k) => format!("Z_{k}"),
    };
    out.push_str(&format!("ring {ring_word}\n"));
    for q in 0..=nerve.dimension() {
        for s in nerve.simplices(q) {
            let is_face = nerve
                .simplices(q + 1)
                .iter()
                .any(|t| s.iter().all(|v| t.contains(v)));
            if q + 1 > nerve.dimension() || !is_face {
                let vs: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("simplex {}\n", vs.join(" ")));
            }
        }
    }
    if let Some(c) = cochain {
        out.push_str(&format!("degree {}\n", c.degree()));
        for (s, &v) in nerve.simplices(c.degree()).iter().zip(c.values()) {
            if v != 0 {
                let vs: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("value {} = {v}\n", vs.join(" ")));
            }
        }
    }
    out
}

/// Complex matrix as rows of `[re, im]` pairs.
pub type MatrixBlock = Vec<Vec<[f64; 2]>>;

fn to_block(m: &CMatrix) -> MatrixBlock {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_block(b: &MatrixBlock) -> Result<CMatrix> {
    let rows = b.len();
    let cols = b.first().map(|r| r.len()).unwrap_or(0);
    if b.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged matrix"));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| C64::new(b[i][j][0], b[i][j][1])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerveBlock {
    pub vertex_count: usize,
    pub simplices: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeBlock {
    pub edge: [usize; 2],
    pub adjacency: Vec<Vec<usize>>,
    pub basepoint: usize,
    pub matrices: Vec<MatrixBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleBlock {
    pub triple: [usize; 3],
    pub points: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleBlock {
    pub name: String,
    pub modulus: u64,
    pub weight: i64,
    pub ranks: Vec<usize>,
    pub transitions: Vec<Vec<MatrixBlock>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionBlock {
    pub manifold: String,
    pub module: String,
}

/// Serialized transition data plus optional modules, connections and tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub nerve: NerveBlock,
    pub dimension: usize,
    pub edges: Vec<EdgeBlock>,
    pub triples: Vec<TripleBlock>,
    #[serde(default)]
    pub modules: Vec<ModuleBlock>,
    #[serde(default)]
    pub connections: Vec<ConnectionBlock>,
    #[serde(default)]
    pub tasks: Vec<String>,
}

/// Tasks run when a manifest lists none.
pub const MANIFEST_TASKS: &[&str] = &["lift", "perturb", "spin_module", "tensor", "modules", "connections"];

impl Manifest {
    pub fn from_transitions(t: &TransitionData) -> Self {
        let nerve = t.layout().nerve();
        let top = nerve.dimension();
        Manifest {
            format_version: 1,
            nerve: NerveBlock {
                vertex_count: nerve.vertex_count(),
                simplices: nerve.simplices(top).to_vec(),
            },
            dimension: t.dimension(),
            edges: t
                .layout()
                .edges()
                .iter()
                .zip(t.matrices())
                .map(|(e, ms)| EdgeBlock {
                    edge: e.edge,
                    adjacency: e.adjacency.clone(),
                    basepoint: e.basepoint,
                    matrices: ms.iter().map(|m| to_block(&m.map(|x| C64::new(x, 0.0)))).collect(),
                })
                .collect(),
            triples: t
                .layout()
                .triples()
                .iter()
                .map(|tr| TripleBlock {
                    triple: tr.triple,
                    points: tr.points.clone(),
                })
                .collect(),
            modules: Vec::new(),
            connections: Vec::new(),
            tasks: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.format_version != 1 {
            return Err(Error::invalid(format!("unsupported manifest version {}", m.format_version)));
        }
        for t in &m.tasks {
            if !MANIFEST_TASKS.contains(&t.as_str()) {
                return Err(Error::Unknown {
                    kind: "task",
                    name: t.clone(),
                });
            }
        }
        Ok(m)
    }

    pub fn layout(&self) -> Result<SampleLayout> {
        let nerve = Nerve::new(self.nerve.vertex_count, &self.nerve.simplices)?;
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSamples {
                edge: e.edge,
                adjacency: e.adjacency.clone(),
                basepoint: e.basepoint,
            })
            .collect();
        let triples = self
            .triples
            .iter()
            .map(|t| TripleSamples {
                triple: t.triple,
                points: t.points.clone(),
            })
            .collect();
        SampleLayout::new(nerve, edges, triples)
    }

    pub fn transition_data(&self) -> Result<TransitionData> {
        let layout = self.layout()?;
        let mut matrices = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.matrices.len() != e.adjacency.len() {
                return Err(Error::invalid(format!("edge {:?}: one matrix per sample node expected", e.edge)));
            }
            let mut ms = Vec::with_capacity(e.matrices.len());
            for b in &e.matrices {
                let c = from_block(b)?;
                if c.iter().any(|z| z.im.abs() > 1e-12) {
                    return Err(Error::invalid("transition matrices must be real"));
                }
                ms.push(RMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].re));
            }
            matrices.push(ms);
        }
        TransitionData::new(layout, self.dimension, matrices)
    }

    pub fn module_data(&self, layout: &SampleLayout) -> Result<Vec<(String, GerbeModuleData)>> {
        self.modules
            .iter()
            .map(|b| {
                let transitions = b
                    .transitions
                    .iter()
                    .map(|ms| ms.iter().map(from_block).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok((
                    b.name.clone(),
                    GerbeModuleData::new(layout, b.modulus, b.weight, b.ranks.clone(), transitions)?,
                ))
            })
            .collect()
    }

    /// Appends a module block.
    pub fn push_module(&mut self, name: &str, m: &GerbeModuleData) {
        self.modules.push(ModuleBlock {
            name: name.to_string(),
            modulus: m.modulus(),
            weight: m.weight() as i64,
            ranks: m.ranks().to_vec(),
            transitions: m.transitions().iter().map(|ms| ms.iter().map(to_block).collect()).collect(),
        });
    }
}

/// Outcome of one suite: pass flag and JSON body.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub passed: bool,
    pub body: Value,
}

fn finish(mut body: Value, passed: bool) -> SuiteReport {
    body["passed"] = json!(passed);
    SuiteReport { passed, body }
}

fn random_spin(n: usize, rng: &mut ChaCha8Rng) -> SpinElement {
    let mut g = SpinElement::identity(n);
    for _ in 0..2 * n {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        g = g.compose(&SpinElement::rotor(n, i, j, theta));
    }
    g
}

/// Sign of the endpoint of the nearest-lift propagation along the loop of
/// rotations by `0..=turns*2π` in the `e_1 e_2` plane.
pub fn loop_lift_sign(n: usize, turns: f64, samples: usize) -> Result<i8> {
    let path: Vec<RMatrix> = (0..=samples)
        .map(|s| {
            let t = turns * 2.0 * std::f64::consts::PI * s as f64 / samples as f64;
            let mut r = RMatrix::identity(n, n);
            r[(0, 0)] = t.cos();
            r[(0, 1)] = -t.sin();
            r[(1, 0)] = t.sin();
            r[(1, 1)] = t.cos();
            r
        })
        .collect();
    let lifts = clifford::propagate_lift(&path, &SpinElement::identity(n))?;
    let end = lifts.last().expect("nonempty path");
    end.central_sign(1e-9)
        .ok_or_else(|| Error::invalid("loop endpoint is not central"))
}

/// Clifford relations, blade spans, the double cover homomorphism and loop lifts.
pub fn clifford_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = true;
    let mut dims = serde_json::Map::new();
    for n in [2usize, 4, 6] {
        let rep = SpinorRep::new(n)?;
        let anti = rep.anticommutation_residual();
        let span = rep.span_rank();
        let mut hom = 0.0f64;
        for _ in 0..100 {
            let g = random_spin(n, &mut rng);
            let h = random_spin(n, &mut rng);
            let lhs = clifford::adjoint_projection(&g.compose(&h));
            let rhs = clifford::adjoint_projection(&g) * clifford::adjoint_projection(&h);
            hom = hom.max(crate::linalg::max_abs_real(&(lhs - rhs)));
        }
        let ok = anti < 1e-12 && span == 1 << n && hom < 1e-10;
        passed &= ok;
        dims.insert(
            format!("n{n}"),
            json!({
                "anticommutation_residual": anti,
                "span_rank": span,
                "expected_span_rank": 1usize << n,
                "homomorphism_residual": hom,
                "passed": ok,
            }),
        );
    }
    let half = loop_lift_sign(3, 1.0, 64)?;
    let full = loop_lift_sign(3, 2.0, 64)?;
    let cover_ok = half == -1 && full == 1;
    passed &= cover_ok;
    Ok(finish(
        json!({
            "dimensions": dims,
            "double_cover": {"loop_2pi": half, "loop_4pi": full, "passed": cover_ok},
        }),
        passed,
    ))
}

fn factors_string(r: &cech::CohomologyResult) -> String {
    r.to_string()
}

/// Cohomology of a nerve file and, if present, the fate of its cochain.
pub fn cech_suite(name: &str, file: &NerveFile) -> Result<SuiteReport> {
    let nerve = &file.nerve;
    let top = nerve.dimension().min(cech::MAX_DEGREE);
    let mut integral = serde_json::Map::new();
    let mut in_ring = serde_json::Map::new();
    for q in 0..=top {
        integral.insert(format!("H{q}"), json!(factors_string(&cech::cohomology(nerve, Ring::Integers, q)?)));
        in_ring.insert(format!("H{q}"), json!(factors_string(&cech::cohomology(nerve, file.ring, q)?)));
    }
    let mut body = json!({
        "name": name,
        "ring": file.ring.to_string(),
        "simplex_counts": (0..=nerve.dimension()).map(|q| nerve.count(q)).collect::<Vec<_>>(),
        "euler_characteristic": nerve.euler_characteristic(),
        "cohomology_integers": integral,
        "cohomology_ring": in_ring,
    });
    let mut passed = true;
    if let Some(c) = &file.cochain {
        let cocycle = cech::is_cocycle(c, nerve)?;
        passed &= cocycle;
        let mut cj = json!({"degree": c.degree(), "is_cocycle": cocycle});
        if cocycle {
            cj["is_coboundary"] = json!(cech::solve_coboundary(c, nerve)?.is_some());
            if c.degree() == 2 && c.ring().modulus().is_some() {
                let b = cech::bockstein(c, nerve)?;
                cj["bockstein_nontrivial"] = json!(!b.trivial);
            }
        }
        body["cochain"] = cj;
    }
    Ok(finish(body, passed))
}

/// Lifting gerbe of sampled frame data: the cocycle, its class, its
/// invariance under lifting choices, the spin module and module arithmetic.
pub fn gerbe_suite(manifest: &Manifest, seed: u64) -> Result<SuiteReport> {
    let t = manifest.transition_data()?;
    let layout = t.layout().clone();
    let nerve = layout.nerve().clone();
    let tasks: Vec<&str> = if manifest.tasks.is_empty() {
        MANIFEST_TASKS.to_vec()
    } else {
        manifest.tasks.iter().map(|s| s.as_str()).collect()
    };
    let (lifted, e) = gerbe::lift_transitions(&t)?;
    let trivial = e.is_trivial(&nerve)?;
    let mut passed = true;
    let mut body = json!({
        "nerve_simplices": (0..=nerve.dimension()).map(|q| nerve.count(q)).collect::<Vec<_>>(),
        "dimension": t.dimension(),
        "cocycle_residual": t.cocycle_residual(),
        "cocycle": e.cochain().values(),
        "cocycle_closed": true,
        "class_trivial": trivial,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if tasks.contains(&"perturb") {
        let mut stable = 0;
        for _ in 0..10 {
            let basepoints: Vec<usize> = layout.edges().iter().map(|e| rng.random_range(0..e.node_count())).collect();
            let flips: Vec<bool> = layout.edges().iter().map(|_| rng.random_bool(0.5)).collect();
            let options = LiftOptions {
                basepoints: Some(basepoints),
                flips,
                tree_seed: Some(rng.random()),
            };
            let (_, e2) = gerbe::lift_transitions_with(&t, &options)?;
            let diff = e2.cochain().add(&neg(e.cochain())?)?;
            if cech::solve_coboundary(&diff, &nerve)?.is_some() {
                stable += 1;
            }
        }
        passed &= stable == 10;
        body["perturbation_trials"] = json!(10);
        body["perturbation_class_stable"] = json!(stable);
    }
    if tasks.contains(&"spin_module") {
        let spin = gerbe::spin_module(&lifted)?;
        let check = gerbe::verify_module(&spin, &e, &layout)?;
        let (plus, minus) = gerbe::half_spin_modules(&lifted)?;
        let hp = gerbe::verify_module(&plus, &e, &layout)?;
        let hm = gerbe::verify_module(&minus, &e, &layout)?;
        let residual = check.residual.max(hp.residual).max(hm.residual);
        passed &= residual < gerbe::MODULE_TOLERANCE;
        body["spin_module_residual"] = json!(residual);
    }
    if tasks.contains(&"tensor") {
        let spin = gerbe::spin_module(&lifted)?;
        let square = gerbe::tensor_modules(&spin, &spin)?;
        let descended = gerbe::descend_weight_zero(&square, &layout)?;
        let cube = gerbe::tensor_modules(&square, &spin)?;
        let cube_check = gerbe::verify_module(&cube, &e, &layout)?;
        let ok = square.weight() == 0 && cube.weight() == 1 && cube_check.holds;
        passed &= ok;
        body["tensor_weights"] = json!({
            "spin_weight": spin.weight(),
            "spin_squared_weight": square.weight(),
            "spin_cubed_weight": cube.weight(),
            "spin_squared_descent_residual": descended.residual,
            "passed": ok,
        });
    }
    if tasks.contains(&"modules") && !manifest.modules.is_empty() {
        let mut out = serde_json::Map::new();
        for (name, m) in manifest.module_data(&layout)? {
            let twist = if m.modulus() == e.modulus() {
                e.clone()
            } else {
                gerbe::GerbeCocycle::trivial(&nerve, m.modulus())?
            };
            let check = gerbe::verify_module(&m, &twist, &layout)?;
            passed &= check.holds;
            out.insert(name, json!({"weight": m.weight(), "holds": check.holds, "residual": check.residual}));
        }
        body["modules"] = Value::Object(out);
    }
    if tasks.contains(&"connections") && !manifest.connections.is_empty() {
        let mut out = Vec::new();
        for c in &manifest.connections {
            let bench = benchmark_registry(&c.manifold, geometry::quadrature_order())?;
            let report = characteristic::topological_index(&bench, &bench.catalog(&c.module)?)?;
            passed &= report.residual < 1e-6;
            out.push(serde_json::to_value(report)?);
        }
        body["connections"] = Value::Array(out);
    }
    Ok(finish(body, passed))
}

fn neg(c: &Cochain) -> Result<Cochain> {
    Cochain::new(c.degree(), c.ring(), c.values().iter().map(|v| -v).collect())
}

/// Topological index of `L_m` (or of `L^(m + 3/2)` on `CP2`) with the
/// supporting curvature checks.
pub fn chern_suite(manifold: Manifold, flux: i64, order: usize, seed: u64) -> Result<SuiteReport> {
    if manifold == Manifold::CP2 {
        if flux < 0 {
            return Err(Error::invalid("on CP2 the flux selects k >= 0 in L^(k + 3/2)"));
        }
        let (exact, report) = characteristic::cp2_index(Rational64::new(2 * flux + 3, 2));
        let oracle = (flux + 1) * (flux + 2) / 2;
        let (p1, c1sq) = characteristic::cp2_quadrature_numbers(64);
        let ok = exact == Rational64::from_integer(oracle)
            && report.residual < 1e-9
            && (p1 - 3.0).abs() < 1e-4
            && (c1sq - 9.0).abs() < 1e-4;
        return Ok(finish(
            json!({
                "index": report,
                "index_exact": exact.to_string(),
                "monomial_count": oracle,
                "pontryagin_quadrature": p1,
                "c1_squared_quadrature": c1sq,
            }),
            ok,
        ));
    }
    let bench = benchmark_registry(manifold.name(), order)?;
    let atlas = bench.atlas()?;
    let line = bench.line_bundle(flux)?;
    let report = characteristic::topological_index(&bench, &line)?;
    let mut passed = (report.value - flux as f64).abs() < 1e-6;
    // twisting curvature of Σ (x) L_m
    let rep = SpinorRep::new(2)?;
    let fiber = CliffordModuleFiber::twisted_spinors(&rep, 1);
    let f_e = geometry::curvature(&bench.twisted_spinors(flux)?, atlas)?.field;
    let f_es = characteristic::twisting_curvature(&f_e, &bench.tangent_curvature()?, fiber.actions())?;
    let commutant = (0..f_es.chart_count())
        .flat_map(|a| f_es.chart_values(a).iter().map(|x| characteristic::commutant_residual(x, fiber.actions())))
        .fold(0.0, f64::max);
    let relative = characteristic::relative_chern_character(&f_es, &fiber)?;
    let ch = characteristic::twisted_chern_character(&geometry::curvature(&line, atlas)?)?;
    let ch_gap = relative.distance(&ch)?;
    passed &= commutant < 1e-8 && ch_gap < 1e-8;
    // connection independence
    let mut drift = 0.0f64;
    for trial in 0..5u64 {
        let form = bench.random_global_form(seed.wrapping_mul(31).wrapping_add(trial), 1)?;
        let shifted = line.with_added_form("shifted", form)?;
        let r = characteristic::topological_index(&bench, &shifted)?;
        drift = drift.max((r.value - report.value).abs());
    }
    passed &= drift < 1e-6;
    Ok(finish(
        json!({
            "index": report,
            "twisting_commutant_residual": commutant,
            "relative_chern_gap": ch_gap,
            "connection_independence_drift": drift,
            "quadrature_order": order,
        }),
        passed,
    ))
}

/// Spectral against topological index.
pub fn index_suite(manifold: Manifold, flux: i64, params: &CompareParams) -> Result<SuiteReport> {
    let cmp = spectral::index_compare(manifold.name(), flux, params)?;
    let passed = cmp.matches;
    Ok(finish(serde_json::to_value(cmp)?, passed))
}

/// Default `--in` of the gerbe suite for a manifold.
fn default_manifest(manifold: Manifold) -> Result<Manifest> {
    match manifold {
        Manifold::S2 => Manifest::parse(shipped("s2_frame.json").expect("shipped manifest")),
        other => Ok(Manifest::from_transitions(&benchmark_registry(other.name(), 8)?.frame_transitions()?)),
    }
}

/// Every suite over its shipped matrix of inputs.
pub fn all_suites(seed: u64, order: usize, lattice_size: usize) -> Result<SuiteReport> {
    let mut body = serde_json::Map::new();
    let mut passed = true;
    let mut push = |key: String, r: SuiteReport| {
        passed &= r.passed;
        body.insert(key, r.body);
    };
    push("clifford-check".into(), clifford_suite(seed)?);
    for name in ["tetra_s2.nerve", "rp2.nerve", "lens_k3.nerve", "torus7.nerve"] {
        push(format!("cech/{name}"), cech_suite(name, &parse_nerve_file(shipped(name).expect("shipped"))?)?);
    }
    push("gerbe/S2".into(), gerbe_suite(&default_manifest(Manifold::S2)?, seed)?);
    push("gerbe/T2".into(), gerbe_suite(&default_manifest(Manifold::T2)?, seed)?);
    for m in [-3i64, 0, 2] {
        push(format!("chern/S2/{m}"), chern_suite(Manifold::S2, m, order, seed)?);
        push(format!("chern/T2/{m}"), chern_suite(Manifold::T2, m, order, seed)?);
    }
    for k in 0..=4 {
        push(format!("chern/CP2/{k}"), chern_suite(Manifold::CP2, k, order, seed)?);
    }
    let params = CompareParams {
        lattice_size,
        quadrature_order: order,
        ..CompareParams::default()
    };
    for m in -3i64..=3 {
        push(format!("index/T2/{m}"), index_suite(Manifold::T2, m, &params)?);
        push(format!("index/S2/{m}"), index_suite(Manifold::S2, m, &params)?);
    }
    Ok(finish(Value::Object(body), passed))
}

#[derive(Debug, Parser)]
#[command(name = "gerbedex", version, about = "Spin geometry checks through lifting bundle gerbes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Benchmark manifold: S2, T2 or CP2.
    #[arg(long, global = true, default_value = "S2")]
    pub manifold: String,
    /// Line bundle degree (on CP2: k in the twist L^(k + 3/2)).
    #[arg(long, global = true, default_value_t = 1, allow_negative_numbers = true)]
    pub flux: i64,
    /// Gauss-Legendre nodes per panel.
    #[arg(long, global = true)]
    pub grid_order: Option<usize>,
    /// Lattice size N of the flux torus.
    #[arg(long, global = true, default_value_t = 12)]
    pub lattice_size: usize,
    /// Seed of every randomized check.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Input file (path, or name of a shipped data file).
    #[arg(long = "in", global = true)]
    pub input: Option<String>,
    /// Report destination (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Clifford relations, spinor spans, double cover.
    CliffordCheck,
    /// Cohomology and Bockstein of a nerve file.
    Cech,
    /// Lifting gerbe of a transition manifest.
    Gerbe,
    /// Characteristic numbers and twisting curvature.
    Chern,
    /// Spectral against topological index.
    Index,
    /// Every suite.
    All,
}

fn execute(cli: &Cli) -> Result<SuiteReport> {
    let order = cli.grid_order.unwrap_or_else(geometry::quadrature_order);
    let manifold = Manifold::parse(&cli.manifold)?;
    let mut report = match cli.command {
        Command::CliffordCheck => clifford_suite(cli.seed)?,
        Command::Cech => match &cli.input {
            Some(input) => {
                let (name, text) = load_input(input)?;
                cech_suite(&name, &parse_nerve_file(&text)?)?
            }
            None => {
                let mut body = serde_json::Map::new();
                let mut passed = true;
                for name in ["tetra_s2.nerve", "rp2.nerve", "lens_k3.nerve", "torus7.nerve"] {
                    let r = cech_suite(name, &parse_nerve_file(shipped(name).expect("shipped"))?)?;
                    passed &= r.passed;
                    body.insert(name.to_string(), r.body);
                }
                finish(Value::Object(body), passed)
            }
        },
        Command::Gerbe => {
            let manifest = match &cli.input {
                Some(input) => Manifest::parse(&load_input(input)?.1)?,
                None => default_manifest(manifold)?,
            };
            gerbe_suite(&manifest, cli.seed)?
        }
        Command::Chern => chern_suite(manifold, cli.flux, order, cli.seed)?,
        Command::Index => {
            let params = CompareParams {
                lattice_size: cli.lattice_size,
                quadrature_order: order,
                ..CompareParams::default()
            };
            index_suite(manifold, cli.flux, &params)?
        }
        Command::All => all_suites(cli.seed, order, cli.lattice_size)?,
    };
    let name = format!("{:?}", cli.command);
    report.body["command"] = json!(command_name(&name));
    report.body["seed"] = json!(cli.seed);
    Ok(report)
}

fn command_name(debug: &str) -> String {
    let mut out = String::new();
    for (i, ch) in debug.chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            out.push('-');
        }
        out.push(ch.to_ascii_lowercase());
    }
    out
}

/// Runs the harness and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let text = match serde_json::to_string_pretty(&report.body) {
        Ok(t) => t + "\n",
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return 2;
            }
            println!("{}: {}", command_name(&format!("{:?}", cli.command)), if report.passed { "passed" } else { "FAILED" });
        }
        None => print!("{text}"),
    }
    if report.passed {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nerve_file_round_trip() {
        let nerve = cech::minimal_rp2();
        let gen = cech::cohomology(&nerve, Ring::Mod(2), 2).unwrap().generators[0].clone();
        let text = format_nerve_file("rp2", &nerve, Ring::Mod(2), Some(&gen));
        let parsed = parse_nerve_file(&text).unwrap();
        assert_eq!(parsed.nerve, nerve);
        assert_eq!(parsed.ring, Ring::Mod(2));
        assert_eq!(parsed.cochain.unwrap(), gen);
    }

    #[test]
    fn nerve_file_errors() {
        assert!(matches!(parse_nerve_file("simplex 0 x"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_nerve_file("ring Z_1\nsimplex 0 1").is_err());
        assert!(parse_nerve_file("simplex 0 1 2\nvalue 0 3 = 1").is_err());
        assert!(parse_nerve_file("# only a comment").is_err());
        assert!(parse_nerve_file("bogus 1").is_err());
    }

    #[test]
    fn shipped_complexes() {
        let lens = parse_nerve_file(shipped("lens_k3.nerve").unwrap()).unwrap();
        let c = lens.cochain.unwrap();
        assert!(!cech::bockstein(&c, &lens.nerve).unwrap().trivial);
        for name in shipped_names().iter().filter(|n| n.ends_with(".nerve")) {
            let f = parse_nerve_file(shipped(name).unwrap()).unwrap();
            assert!(f.nerve.count(0) > 0, "{name}");
        }
    }

    #[test]
    fn manifest_round_trip() {
        let t = gerbe::s2_frame_transitions().unwrap();
        let m = Manifest::from_transitions(&t);
        let text = serde_json::to_string(&m).unwrap();
        let back = Manifest::parse(&text).unwrap().transition_data().unwrap();
        assert_eq!(back, t);
        let shipped_manifest = Manifest::parse(shipped("s2_frame.json").unwrap()).unwrap();
        assert_eq!(shipped_manifest.transition_data().unwrap(), t);
    }

    #[test]
    fn manifest_rejects_unknown_task() {
        let mut m = Manifest::from_transitions(&TransitionData::constant(cech::tetrahedron_boundary(), &RMatrix::identity(2, 2)).unwrap());
        m.tasks.push("launch".into());
        assert!(Manifest::parse(&serde_json::to_string(&m).unwrap()).is_err());
    }

    #[test]
    fn loop_lifts() {
        assert_eq!(loop_lift_sign(2, 1.0, 64).unwrap(), -1);
        assert_eq!(loop_lift_sign(2, 2.0, 64).unwrap(), 1);
    }

    #[test]
    fn command_names() {
        assert_eq!(command_name("CliffordCheck"), "clifford-check");
        assert_eq!(command_name("All"), "all");
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["gerbedex", "frobnicate"]), 2);
        assert_eq!(run(["gerbedex", "index", "--lattice-size", "many"]), 2);
        assert_eq!(run(["gerbedex", "cech", "--in", "no_such.nerve"]), 2);
    }
}
