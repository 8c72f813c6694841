use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid regions: {0}")]
    InvalidRegion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (relative defect {defect:e})")]
    NotSymmetric { defect: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("eigen-residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },

    #[error("eigenvectors are not mass-orthonormal (Gram defect {defect:e}, tolerance {tol:e})")]
    NotOrthonormal { defect: f64, tol: f64 },

    #[error("fractional exponent s = {0} outside (0, 1]")]
    InvalidExponent(f64),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("spectral parameter {mu} lies within {gap:e} of eigenvalue mu_{k} = {eigenvalue}")]
    Singular { mu: f64, k: usize, eigenvalue: f64, gap: f64 },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("quadrature tail bound {bound:e} exceeds tolerance {tol:e} at the maximal horizon")]
    QuadratureTail { bound: f64, tol: f64 },

    #[error("eigenpairs are not gauge-aligned: {0}; align the second decomposition to the first")]
    UnalignedGauge(String),

    #[error("exponential fit rejected: relative residual {residual:e} above {threshold:e}")]
    FitRejected { residual: f64, threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
