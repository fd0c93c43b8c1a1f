use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("element {element} is already at the maximum {dimension} level {max}")]
    LevelCap {
        element: usize,
        dimension: &'static str,
        max: u8,
    },

    #[error("faces do not coincide: {0}")]
    NonCoincidentFaces(String),

    #[error("meshes belong to different coarse steps ({0} vs {1})")]
    StepMismatch(usize, usize),

    #[error("mesh transfer error: {0}")]
    Transfer(String),

    #[error("upscaling error: {0}")]
    Upscaling(String),

    #[error("dof mismatch: expected {expected} values, got {got}")]
    DofMismatch { expected: usize, got: usize },

    #[error("non-finite value in state at index {0}")]
    NonFinite(usize),

    #[error("well error: {0}")]
    Well(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearNotConverged { iterations: usize, residual: f64 },

    #[error("newton failed to converge in {iterations} iterations; residual history {history:?}")]
    NewtonNotConverged { iterations: usize, history: Vec<f64> },

    #[error("linear solver failed inside newton iteration {iteration}: {source}")]
    NewtonLinear {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("field file {path}: {message}")]
    Field { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("simulation aborted at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the nonlinear or linear solvers (as opposed to
    /// bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NewtonNotConverged { .. }
            | Error::NewtonLinear { .. }
            | Error::LinearNotConverged { .. }
            | Error::Singular(_) => true,
            Error::Step { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    /// Process exit code: 1 for bad input, 2 for solver failures, 3 for
    /// I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Step { source, .. } => match **source {
                Error::Config { .. } | Error::Field { .. } | Error::Well(_) | Error::Io { .. } => source.exit_code(),
                _ => 2,
            },
            e if e.is_solver_failure() => 2,
            _ => 1,
        }
    }
}
