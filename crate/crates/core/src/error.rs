use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two admissible lifts are too close to tell apart; the caller has to
    /// sample the path more densely.
    #[error("lift ambiguity: distance {distance:.3e} to the reference exceeds threshold {threshold}")]
    LiftAmbiguity { distance: f64, threshold: f64 },

    #[error("nontrivial holonomy on overlap {edge:?}: the overlap is not simply connected")]
    Holonomy { edge: [usize; 2] },

    #[error("not a cocycle: coboundary has {nonzero} nonzero entries")]
    NotCocycle { nonzero: usize },

    #[error("{what}: residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    Residual {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("integer overflow during exact arithmetic")]
    Overflow,

    #[error("ill-conditioned operator: eigenvalue {eigenvalue:.3e} within {tolerance:.1e} of zero")]
    IllConditioned { eigenvalue: f64, tolerance: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn residual(what: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Error::Residual {
            what: what.into(),
            residual,
            tolerance,
        }
    }
}
