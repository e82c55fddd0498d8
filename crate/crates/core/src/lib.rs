//! Computational spin geometry through lifting bundle gerbes.
//!
//! The crate is organized bottom-up:
//!
//! - [`clifford`]: exact Clifford algebra arithmetic in the skew convention
//!   `c(v)^2 = -|v|^2`, spinor representations, the double cover
//!   `Spin(n) -> SO(n)`, curvature elements `c(R)` and the factorization of a
//!   Clifford module fiber as `Sigma (x) W`.
//! - [`cech`]: nerves of good covers, integer and `Z_k` cochains, cohomology via
//!   Smith normal form and the Bockstein obstruction.
//! - [`gerbe`]: sampled transition functions, lifting to `Spin(n)`, the
//!   `Z_k` cocycle `e` of the lifting gerbe and twisted (`Gamma^d`) modules.
//! - [`geometry`]: benchmark manifolds with quadrature atlases, module
//!   connections, curvature and its descent.
//! - [`characteristic`]: twisted and relative Chern characters, the A-hat genus
//!   and the topological side of the index formula.
//! - [`spectral`]: lattice overlap index on the flux torus and the exact
//!   monopole Dirac spectrum on the round sphere.
//! - [`cli`]: the `gerbedex` command line harness, manifest and nerve file
//!   formats, JSON reports.

pub mod cech;
pub mod characteristic;
pub mod cli;
pub mod clifford;
mod error;
pub mod geometry;
pub mod gerbe;
pub mod linalg;
pub mod spectral;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
