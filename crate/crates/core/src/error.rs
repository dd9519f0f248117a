use thiserror::Error;

use crate::minimizer::ConvergenceReport;
use crate::mueller_energy::DensityMatrix1P;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("occupation {value:e} of subshell {index} is below the floor {floor:e}")]
    Singularity { index: usize, value: f64, floor: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} outer iterations (last energy change {last_change:e})")]
    Convergence {
        iterations: usize,
        last_change: f64,
        best: Box<(DensityMatrix1P, ConvergenceReport)>,
    },

    #[error("only {found} bound states available, {needed} required")]
    SpectralDeficit { found: usize, needed: usize },

    #[error("step {h:e} is below the sample spacing {spacing:e}")]
    Resolution { h: f64, spacing: f64 },

    #[error("radius {r} lies outside the grid (R_max = {r_max})")]
    Extrapolation { r: f64, r_max: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: `{field}`: {message}")]
    Config {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
