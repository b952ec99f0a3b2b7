use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis order overflow: n = {n} exceeds the maximum {max}")]
    BasisOrderOverflow { n: usize, max: usize },

    #[error("domain error: |x| = {x} lies outside [-{half_width}, {half_width}]")]
    Domain { x: f64, half_width: f64 },

    #[error("under-resolved grid: {0}")]
    UnderResolvedGrid(String),

    #[error("grid incompatible with basis: {0}")]
    GridIncompatible(String),

    #[error("degenerate flow: all coefficients vanish")]
    DegenerateFlow,

    #[error("collapsed state: column {0} has zero norm")]
    CollapsedState(usize),

    #[error("support mismatch: p[{0}] > 0 but q[{0}] = 0")]
    SupportMismatch(usize),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("walker count must be even and positive, got {0}")]
    OddWalkerCount(usize),

    #[error("too few paths: need at least {needed}, got {got}")]
    TooFewPaths { needed: usize, got: usize },

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("Jacobi iteration did not converge in {0} sweeps")]
    NotConverged(usize),

    #[error("unconverged reference: {0}")]
    UnconvergedReference(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed sample bank: {0}")]
    BadBank(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
