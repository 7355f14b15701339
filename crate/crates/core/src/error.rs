use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch size {b} out of range for {n} samples")]
    BatchOutOfRange { b: usize, n: usize },

    /// A ledger coordinate hit |γg| = 1 exactly; the potential has no inverse.
    #[error("non-invertible potential: coordinate {0} is degenerate")]
    NonInvertiblePotential(usize),

    #[error("newton stalled: line search floor reached with interpolation residual {0:.3e}")]
    NewtonStalled(f64),

    #[error("singular jacobian (even after 1e-12 ridge)")]
    SingularJacobian,

    #[error("linear program infeasible: phase-1 objective {0:.3e}")]
    Infeasible(f64),

    #[error("linear program unbounded")]
    Unbounded,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
