use std::path::PathBuf;

use crate::dataio::EnergyType;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation failed at {location}: {message}")]
    Validation { location: String, message: String },

    #[error("duplicate key {key} at {location}")]
    DuplicateKey { key: String, location: String },

    #[error("missing values at {}", .gaps.join("; "))]
    MissingData { gaps: Vec<String> },

    #[error("no emission factor for energy type `{0}`")]
    MissingFactor(EnergyType),

    #[error("misaligned inputs: {0}")]
    Alignment(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("optimizer did not converge after {iterations} iterations (best objective {best_objective:e})")]
    NonConvergence {
        iterations: usize,
        best_objective: f64,
        best_params: Vec<f64>,
    },

    #[error("training diverged at epoch {epoch} (mse {mse:e})")]
    Divergence { epoch: usize, mse: f64, history: Vec<f64> },

    #[error("no differencing order up to {max_d} yields a stationary series; set the ARIMA order manually")]
    NoStationaryOrder { max_d: usize },

    #[error("invariant breached: {0}")]
    Invariant(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with any stage labels removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the error signals a broken internal invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self.root(), Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
