use std::path::PathBuf;

use crate::solver::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate linearization pivot for user {user} (|w_prev^H h| = {magnitude:e})")]
    DegeneratePivot { user: usize, magnitude: f64 },

    #[error("beamformer has zero norm")]
    ZeroBeamformer,

    #[error("malformed cone program: {0}")]
    MalformedProgram(String),

    #[error("solver returned {status:?} at outer iteration {iteration}")]
    Solver { status: SolveStatus, iteration: usize },

    #[error("no convergence within {0} outer iterations")]
    MaxOuterExceeded(usize),

    #[error("bisection upper bound still feasible after {doublings} doublings (t_U = {upper})")]
    BracketError { doublings: usize, upper: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
