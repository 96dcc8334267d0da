use thiserror::Error;

/// Errors raised anywhere in the emulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("register of {n} ions with {d} levels needs {amplitudes} amplitudes, budget is {budget}")]
    Capacity {
        n: usize,
        d: usize,
        amplitudes: u128,
        budget: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("matrix has shape {rows}x{cols}, expected {expected}x{expected}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("ion index {index} out of range for {n} ions")]
    IonIndex { index: usize, n: usize },
    #[error("two-ion operation needs distinct ions, got {0} twice")]
    EqualIndices(usize),
    #[error("level {level} not allowed here ({context})")]
    Level { level: usize, context: &'static str },
    #[error("registers differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("ion-group violation at op {op_index}: {reason}")]
    GroupViolation { op_index: usize, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("confusion matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("chain is unstable: mode {mode} has squared frequency {value:.3e}")]
    Unstable { mode: usize, value: f64 },
    #[error("pulse constraints are degenerate: null space has dimension {0}")]
    Degenerate(usize),
    #[error("required peak amplitude {required:.3e} rad/s exceeds cap {cap:.3e} rad/s")]
    Power { required: f64, cap: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("overlap matrix has no eigenvalues above the cutoff")]
    EmptySubspace,
    #[error("Pauli strings differ in length ({0} vs {1})")]
    PauliLength(usize, usize),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Capacity { .. } => "capacity",
            Error::NoConvergence { .. }
            | Error::Unstable { .. }
            | Error::Degenerate(_)
            | Error::Power { .. }
            | Error::Fit(_)
            | Error::EmptySubspace => "numerical",
            Error::Unsupported(_) => "unsupported",
            _ => "validation",
        }
    }
}
