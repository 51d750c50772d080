use thiserror::Error;

/// Errors raised by the linear-algebra primitives, the root solvers and the optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{method} did not converge after {iterations} iterations")]
    NoConvergence { method: &'static str, iterations: usize },

    #[error("{method} diverged at iteration {iteration} (residual {residual:.3e})")]
    Diverged {
        method: &'static str,
        iteration: usize,
        residual: f64,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("layer {layer} side {side} block {block}: {source}")]
    Block {
        layer: usize,
        side: char,
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::NoConvergence { .. }
            | Error::Diverged { .. }
            | Error::DegenerateSpectrum(_) => true,
            Error::Block { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
