//! Small dense linear algebra helpers shared by the numerical modules.
//!
//! Heavy lifting (SVD, Hermitian eigensolves) is delegated to `nalgebra`;
//! this module adds Gauss-Legendre rules, spectral collocation on those
//! nodes and a few norms and predicates used in residual checks.

use nalgebra::DMatrix;

use crate::{CMatrix, RMatrix, C64};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Barycentric weights for Lagrange interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                w[j] /= nodes[j] - nodes[k];
            }
        }
    }
    // rescale to avoid drifting toward underflow for large orders
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    w.iter().map(|v| v / scale).collect()
}

/// Collocation differentiation matrix `D` with `(D f)_i ~ f'(x_i)`.
pub fn differentiation_matrix(nodes: &[f64]) -> RMatrix {
    let n = nodes.len();
    let w = barycentric_weights(nodes);
    let mut d = RMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Lagrange basis values at `x` for the given nodes (barycentric form).
pub fn lagrange_basis(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    if let Some(hit) = nodes.iter().position(|&xn| (x - xn).abs() < 1e-15) {
        let mut out = vec![0.0; n];
        out[hit] = 1.0;
        return out;
    }
    let terms: Vec<f64> = (0..n).map(|j| bary[j] / (x - nodes[j])).collect();
    let total: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / total).collect()
}

/// Largest absolute entry of a complex matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest absolute entry of a real matrix.
pub fn max_abs_real(m: &RMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

/// Spectral (operator 2-) norm of a real matrix.
pub fn op_norm_real(m: &RMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &s| a.max(s))
}

/// Spectral norm of a complex matrix.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &s| a.max(s))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Promote a real matrix to a complex one.
pub fn complexify(m: &RMatrix) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Orthonormal basis of the (numerical) null space of `m`, as columns.
///
/// Singular values below `rel_cutoff * sigma_max` count as zero.
pub fn null_space(m: &CMatrix, rel_cutoff: f64) -> CMatrix {
    let cols = m.ncols();
    // pad with zero rows so that the SVD returns a full set of right vectors
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0f64, |a, &s| a.max(s));
    let cutoff = if smax > 0.0 { rel_cutoff * smax } else { f64::INFINITY };
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= cutoff).collect();
    let mut out = CMatrix::zeros(cols, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..cols {
            out[(r, c)] = v_t[(i, r)].conj();
        }
    }
    out
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn rank(m: &CMatrix, rel_cutoff: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let smax = s.iter().fold(0.0f64, |a, &x| a.max(x));
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_cutoff * smax).count()
}

/// Smallest singular value; zero for empty input.
pub fn min_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &x| a.min(x))
}

/// Block diagonal matrix `diag(a, b)`.
pub fn block_diagonal(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Column-major vectorization helper used by intertwiner solves.
pub fn vectorize(m: &CMatrix) -> Vec<C64> {
    m.iter().copied().collect()
}

/// Inverse of a column-major vectorization.
pub fn unvectorize(v: &[C64], rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Inverse that reports failure instead of panicking.
pub fn try_inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // exact for degree <= 9
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((integral - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn high_order_rule_is_accurate() {
        let (x, w) = gauss_legendre(32);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((integral - (1f64.exp() - (-1f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn collocation_derivative_of_smooth_function() {
        let (x, _) = gauss_legendre(24);
        let d = differentiation_matrix(&x);
        let f: Vec<f64> = x.iter().map(|t| (2.0 * t).sin()).collect();
        for i in 0..x.len() {
            let df: f64 = (0..x.len()).map(|j| d[(i, j)] * f[j]).sum();
            assert!((df - 2.0 * (2.0 * x[i]).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn lagrange_interpolation_reproduces_polynomial() {
        let (x, _) = gauss_legendre(6);
        let b = barycentric_weights(&x);
        let l = lagrange_basis(&x, &b, 0.3);
        let val: f64 = l.iter().zip(&x).map(|(l, x)| l * (x * x * x - x)).sum();
        assert!((val - (0.027 - 0.3)).abs() < 1e-13);
    }

    #[test]
    fn null_space_of_rank_deficient_matrix() {
        let m = CMatrix::from_row_slice(
            2,
            3,
            &[
                C64::new(1.0, 0.0),
                C64::new(2.0, 0.0),
                C64::new(3.0, 0.0),
                C64::new(2.0, 0.0),
                C64::new(4.0, 0.0),
                C64::new(6.0, 0.0),
            ],
        );
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&m * &ns)) < 1e-12);
    }
}
