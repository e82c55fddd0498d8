//! Analytic side of the index formula: graded zero-mode counting on the flux
//! torus (lattice overlap index) and on the round sphere (exact monopole
//! Dirac spectrum).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::characteristic;
use crate::geometry::{self, benchmark_registry};
use crate::{CMatrix, Error, Result, C64};

/// Eigenvalues of `H` closer to zero than this make the index ill-defined.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-10;

/// Default Wilson parameter.
pub const DEFAULT_WILSON_R: f64 = 1.0;

/// Default mass parameter `m0` (the operator carries mass `-m0`).
pub const DEFAULT_M0: f64 = 1.0;

/// Orientation convention: `index = INDEX_SIGN * 1/2 * sum sign(λ(H))`,
/// fixed so that the flux-one torus has index `+1` like its Chern number.
pub const INDEX_SIGN: f64 = 1.0;

/// Largest charge accepted by [`monopole_kernel`].
pub const MAX_MONOPOLE_CHARGE: i64 = 20;

/// Largest cutoff level accepted by [`monopole_kernel`].
pub const MAX_CUTOFF: usize = 50;

/// `U(1)` links on an `N x N` periodic lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGauge {
    size: usize,
    flux: i64,
    /// `links[site][mu]` for `site = x + N y`, `mu = 0 (x), 1 (y)`.
    links: Vec<[C64; 2]>,
}

impl LatticeGauge {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn flux(&self) -> i64 {
        self.flux
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        (x % self.size) + self.size * (y % self.size)
    }

    pub fn link(&self, x: usize, y: usize, mu: usize) -> C64 {
        self.links[self.site(x, y)][mu]
    }

    /// `U_x(x,y) U_y(x+1,y) U_x(x,y+1)^* U_y(x,y)^*`.
    pub fn plaquette(&self, x: usize, y: usize) -> C64 {
        self.link(x, y, 0) * self.link(x + 1, y, 1) * self.link(x, y + 1, 0).conj() * self.link(x, y, 1).conj()
    }

    /// Largest `||U| - 1|` over all links.
    pub fn unitarity_residual(&self) -> f64 {
        self.links
            .iter()
            .flat_map(|l| l.iter().map(|u| (u.norm() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

/// Uniform flux `m`: every plaquette carries `exp(2πi m / N^2)`; links along
/// `y` wind with `x`, and the last column of `x` links carries the twist.
pub fn build_flux_background(n: usize, m: i64) -> Result<LatticeGauge> {
    if n < 8 {
        return Err(Error::invalid(format!("lattice size {n} is below 8")));
    }
    if 3 * m.unsigned_abs() as usize > n {
        return Err(Error::invalid(format!("flux {m} is not resolvable on a {n} x {n} lattice")));
    }
    let theta = 2.0 * PI * m as f64 / (n * n) as f64;
    let mut links = vec![[C64::new(1.0, 0.0); 2]; n * n];
    for y in 0..n {
        for x in 0..n {
            let site = x + n * y;
            links[site][1] = C64::from_polar(1.0, theta * x as f64);
            if x == n - 1 {
                links[site][0] = C64::from_polar(1.0, -theta * (n * y) as f64);
            }
        }
    }
    Ok(LatticeGauge { size: n, flux: m, links })
}

/// Wilson-Dirac operator in two dimensions with `γ_1 = σ_1`, `γ_2 = σ_2`
/// and chirality `γ = σ_3`.
#[derive(Clone, Debug)]
pub struct LatticeDiracOperator {
    pub matrix: CMatrix,
    pub chirality: CMatrix,
    pub wilson_r: f64,
    pub m0: f64,
}

fn pauli() -> [CMatrix; 3] {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

impl LatticeDiracOperator {
    /// `D_W ψ(x) = (2r - m0) ψ(x) - 1/2 sum_mu [(r - γ_mu) U_mu(x) ψ(x+mu)
    /// + (r + γ_mu) U_mu(x-mu)^* ψ(x-mu)]`.
    pub fn new(gauge: &LatticeGauge, wilson_r: f64, m0: f64) -> Self {
        let n = gauge.size;
        let dim = 2 * n * n;
        let [s1, s2, s3] = pauli();
        let gammas = [s1, s2];
        let id = crate::linalg::identity(2);
        let mut d = CMatrix::zeros(dim, dim);
        let mut add_block = |row: usize, col: usize, block: &CMatrix| {
            for a in 0..2 {
                for b in 0..2 {
                    d[(2 * row + a, 2 * col + b)] += block[(a, b)];
                }
            }
        };
        for y in 0..n {
            for x in 0..n {
                let s = gauge.site(x, y);
                add_block(s, s, &(&id * C64::new(2.0 * wilson_r - m0, 0.0)));
                for (mu, g) in gammas.iter().enumerate() {
                    let (fx, fy) = if mu == 0 { (x + 1, y) } else { (x, y + 1) };
                    let (bx, by) = if mu == 0 { (x + n - 1, y) } else { (x, y + n - 1) };
                    let fwd = gauge.site(fx, fy);
                    let bwd = gauge.site(bx, by);
                    let u_fwd = gauge.link(x, y, mu);
                    let u_bwd = gauge.link(bx, by, mu).conj();
                    add_block(s, fwd, &((&id * C64::new(wilson_r, 0.0) - g) * (u_fwd * -0.5)));
                    add_block(s, bwd, &((&id * C64::new(wilson_r, 0.0) + g) * (u_bwd * -0.5)));
                }
            }
        }
        let mut chirality = CMatrix::zeros(dim, dim);
        for s in 0..n * n {
            for a in 0..2 {
                chirality[(2 * s + a, 2 * s + a)] = s3[(a, a)];
            }
        }
        LatticeDiracOperator {
            matrix: d,
            chirality,
            wilson_r,
            m0,
        }
    }

    /// `|γ D γ - D^†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let lhs = &self.chirality * &self.matrix * &self.chirality;
        crate::linalg::max_abs(&(lhs - self.matrix.adjoint()))
    }

    /// `H = γ D_W`.
    pub fn hermitian(&self) -> CMatrix {
        &self.chirality * &self.matrix
    }
}

/// Spectral flow index `INDEX_SIGN * 1/2 * sum sign(λ)` of `H = γ D_W`.
pub fn overlap_index(gauge: &LatticeGauge, wilson_r: f64, m0: f64) -> Result<i64> {
    if !(m0 > 0.0 && m0 < 2.0 * wilson_r) {
        return Err(Error::invalid(format!(
            "m0 = {m0} is outside the physical branch (0, {})",
            2.0 * wilson_r
        )));
    }
    let op = LatticeDiracOperator::new(gauge, wilson_r, m0);
    let h = op.hermitian();
    let eigenvalues = h.symmetric_eigenvalues();
    let smallest = eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    if smallest < ZERO_MODE_TOLERANCE {
        return Err(Error::IllConditioned {
            eigenvalue: smallest,
            tolerance: ZERO_MODE_TOLERANCE,
        });
    }
    let signature: f64 = eigenvalues.iter().map(|l| l.signum()).sum();
    let value = INDEX_SIGN * 0.5 * signature;
    let rounded = value.round();
    if (value - rounded).abs() > 1e-9 {
        return Err(Error::residual("integrality of the overlap index", (value - rounded).abs(), 1e-9));
    }
    Ok(rounded as i64)
}

/// One lattice configuration `(N, m, r, m0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeConfig {
    pub size: usize,
    pub flux: i64,
    pub wilson_r: f64,
    pub m0: f64,
}

/// Overlap indices of independent configurations, computed in parallel; the
/// output order matches the input.
pub fn overlap_index_batch(configs: &[LatticeConfig]) -> Vec<Result<i64>> {
    configs
        .par_iter()
        .map(|c| overlap_index(&build_flux_background(c.size, c.flux)?, c.wilson_r, c.m0))
        .collect()
}

/// One eigenvalue level of the monopole Dirac operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralLevel {
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

/// Spectrum of the Dirac operator on the round unit sphere coupled to `L_m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonopoleSpectrum {
    pub charge: i64,
    pub kernel_plus: usize,
    pub kernel_minus: usize,
    /// Nonzero levels `±sqrt(k (k + |m|))`, `k = 1..=cutoff`, then the kernel.
    pub levels: Vec<SpectralLevel>,
}

impl MonopoleSpectrum {
    pub fn index(&self) -> i64 {
        self.kernel_plus as i64 - self.kernel_minus as i64
    }

    /// Total number of modes in the truncation.
    pub fn mode_count(&self) -> usize {
        self.levels.iter().map(|l| l.multiplicity).sum()
    }
}

/// Exact monopole spectrum: with `q = m/2`, total angular momentum
/// `j = |q| - 1/2 + k` and `λ^2 = (j + 1/2)^2 - q^2 = k (k + |m|)`, each sign
/// with multiplicity `2j + 1`; the `k = 0` level is the kernel, `|m|` modes of
/// chirality `sign(m)`.
pub fn monopole_kernel(m: i64, cutoff: usize) -> Result<MonopoleSpectrum> {
    if m.abs() > MAX_MONOPOLE_CHARGE {
        return Err(Error::invalid(format!("charge {m} exceeds {MAX_MONOPOLE_CHARGE}")));
    }
    if cutoff > MAX_CUTOFF {
        return Err(Error::invalid(format!("cutoff {cutoff} exceeds {MAX_CUTOFF}")));
    }
    let a = m.unsigned_abs() as usize;
    let mut levels = Vec::new();
    for k in 1..=cutoff {
        let lambda = ((k * (k + a)) as f64).sqrt();
        let multiplicity = 2 * k + a;
        levels.push(SpectralLevel {
            eigenvalue: lambda,
            multiplicity,
        });
        levels.push(SpectralLevel {
            eigenvalue: -lambda,
            multiplicity,
        });
    }
    let (kernel_plus, kernel_minus) = if m >= 0 { (a, 0) } else { (0, a) };
    if a > 0 {
        levels.push(SpectralLevel {
            eigenvalue: 0.0,
            multiplicity: a,
        });
    }
    Ok(MonopoleSpectrum {
        charge: m,
        kernel_plus,
        kernel_minus,
        levels,
    })
}

/// Both sides of the index formula for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexComparison {
    pub manifold: String,
    pub flux: i64,
    #[serde(rename = "N")]
    pub lattice_size: Option<usize>,
    pub index_spectral: i64,
    pub index_topological: f64,
    #[serde(rename = "match")]
    pub matches: bool,
}

/// Parameters of [`index_compare`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareParams {
    pub lattice_size: usize,
    pub wilson_r: f64,
    pub m0: f64,
    pub quadrature_order: usize,
    pub cutoff: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            lattice_size: 12,
            wilson_r: DEFAULT_WILSON_R,
            m0: DEFAULT_M0,
            quadrature_order: geometry::quadrature_order(),
            cutoff: 10,
        }
    }
}

/// Spectral index (overlap on `T2`, monopole kernel on `S2`) against
/// `∫ Â ch(L_m)`; `matches` requires the topological value to round to the
/// spectral integer within `1e-6`.
pub fn index_compare(manifold: &str, flux: i64, params: &CompareParams) -> Result<IndexComparison> {
    let bench = benchmark_registry(manifold, params.quadrature_order)?;
    let topological = characteristic::topological_index(&bench, &bench.line_bundle(flux)?)?;
    let (spectral, size) = match bench.manifold {
        geometry::Manifold::T2 => {
            let gauge = build_flux_background(params.lattice_size, flux)?;
            (overlap_index(&gauge, params.wilson_r, params.m0)?, Some(params.lattice_size))
        }
        geometry::Manifold::S2 => (monopole_kernel(flux, params.cutoff)?.index(), None),
        geometry::Manifold::CP2 => return Err(Error::invalid("CP2 has no spectral side")),
    };
    Ok(IndexComparison {
        manifold: bench.manifold.name().to_string(),
        flux,
        lattice_size: size,
        index_spectral: spectral,
        index_topological: topological.value,
        matches: (topological.value - spectral as f64).abs() < 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_background_has_unit_links() {
        let g = build_flux_background(8, 0).unwrap();
        assert!(g.links.iter().all(|l| l[0] == C64::new(1.0, 0.0) && l[1] == C64::new(1.0, 0.0)));
    }

    #[test]
    fn plaquettes_carry_uniform_flux() {
        for (n, m) in [(8, 1), (12, -3), (16, 2)] {
            let g = build_flux_background(n, m).unwrap();
            let expected = C64::from_polar(1.0, 2.0 * PI * m as f64 / (n * n) as f64);
            let mut product = C64::new(1.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    assert!((g.plaquette(x, y) - expected).norm() < 1e-12);
                    product *= g.plaquette(x, y);
                }
            }
            assert!((product - C64::new(1.0, 0.0)).norm() < 1e-9);
            assert!(g.unitarity_residual() < 1e-14);
        }
    }

    #[test]
    fn negative_flux_conjugates_links() {
        let (p, q) = (build_flux_background(10, 2).unwrap(), build_flux_background(10, -2).unwrap());
        for (a, b) in p.links.iter().zip(&q.links) {
            assert!((a[0].conj() - b[0]).norm() < 1e-14 && (a[1].conj() - b[1]).norm() < 1e-14);
        }
    }

    #[test]
    fn flux_bounds() {
        assert!(build_flux_background(6, 0).is_err());
        assert!(build_flux_background(8, 3).is_err());
        assert!(build_flux_background(10, 3).is_ok());
    }

    #[test]
    fn gamma_hermiticity() {
        let g = build_flux_background(8, 1).unwrap();
        let op = LatticeDiracOperator::new(&g, 1.0, 1.0);
        assert!(op.hermiticity_residual() < 1e-14);
    }

    #[test]
    fn overlap_index_small_lattice() {
        let configs: Vec<LatticeConfig> = (-2..=2)
            .map(|m| LatticeConfig {
                size: 8,
                flux: m,
                wilson_r: 1.0,
                m0: 1.0,
            })
            .collect();
        let out = overlap_index_batch(&configs);
        for (c, r) in configs.iter().zip(out) {
            assert_eq!(r.unwrap(), c.flux);
        }
    }

    #[test]
    fn unphysical_mass_is_rejected() {
        let g = build_flux_background(8, 1).unwrap();
        assert!(overlap_index(&g, 1.0, 2.5).is_err());
    }

    #[test]
    fn monopole_spectrum() {
        let s = monopole_kernel(0, 5).unwrap();
        assert_eq!((s.kernel_plus, s.kernel_minus), (0, 0));
        let min = s.levels.iter().map(|l| l.eigenvalue.abs()).fold(f64::INFINITY, f64::min);
        assert!((min - 1.0).abs() < 1e-15);
        let s = monopole_kernel(3, 5).unwrap();
        assert_eq!((s.kernel_plus, s.kernel_minus, s.index()), (3, 0, 3));
        assert_eq!(monopole_kernel(-1, 5).unwrap().index(), -1);
        assert!(monopole_kernel(21, 5).is_err());
        assert!(monopole_kernel(1, 51).is_err());
    }

    /// Spinors twisted by `L_m` have chirality components of spin weight
    /// `q -+ 1/2`; sections of spin weight `s` expand in harmonics with
    /// `j >= |s|`, `2j + 1` each.
    #[test]
    fn monopole_modes_match_spin_weighted_harmonics() {
        for m in -6i64..=6 {
            for cutoff in [0usize, 1, 4, 9] {
                let s = monopole_kernel(m, cutoff).unwrap();
                // twice j to stay in integers
                let a = m.unsigned_abs() as i64;
                let top = a - 1 + 2 * cutoff as i64;
                let count = |two_s: i64| {
                    let mut c = 0;
                    let mut two_j = two_s.abs();
                    while two_j <= top {
                        c += (two_j + 1) as usize;
                        two_j += 2;
                    }
                    c
                };
                let expected = count(m - 1) + count(m + 1);
                assert_eq!(s.mode_count(), expected, "m = {m}, cutoff = {cutoff}");
            }
        }
    }

    #[test]
    fn compare_sides() {
        let params = CompareParams {
            lattice_size: 8,
            quadrature_order: 16,
            ..CompareParams::default()
        };
        for (manifold, m) in [("T2", 1), ("T2", 0), ("S2", -2)] {
            let r = index_compare(manifold, m, &params).unwrap();
            assert!(r.matches, "{r:?}");
            assert_eq!(r.index_spectral, m);
        }
        assert!(index_compare("CP2", 1, &params).is_err());
    }
}
