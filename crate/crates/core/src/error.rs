use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown nuclear species `{0}`")]
    UnknownSpecies(String),

    #[error("degenerate conditional precession for electron projection {projection}: frequency is zero")]
    DegeneratePrecession { projection: f64 },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("no sign change of the resonance condition in [{lo_us:.6}, {hi_us:.6}] us")]
    SolverFailure { lo_us: f64, hi_us: f64 },

    #[error("no real critical field: discriminant {discriminant:.6} is negative")]
    NoCriticalField { discriminant: f64 },

    #[error("nucleus index {index} out of range for a system with {count} nuclei")]
    NucleusIndex { index: usize, count: usize },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
