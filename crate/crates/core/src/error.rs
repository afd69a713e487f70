use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {source}")]
    Linalg {
        context: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error("sigma-point scaling is degenerate (N + lambda = {0})")]
    DegenerateScaling(f64),
    #[error("dynamics returned a non-finite state")]
    NonFiniteDynamics,
    #[error("measurement function returned a non-finite value")]
    NonFiniteMeasurement,
    #[error("iterated update produced a non-finite iterate")]
    NonFiniteIterate,
    #[error("weighted innovation matrix is not positive definite")]
    InnerMatrixNotPD,
    #[error("analytic Jacobian requested but the model does not supply one")]
    JacobianUnavailable,
    #[error("range measurement is singular at the origin")]
    RangeSingularity,
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown measurement location: {0}")]
    UnknownMeasurementLocation(String),
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the inputs (config, network file, parameters)
    /// rather than by a numerical failure during a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::InvalidParameter(_)
                | Self::Validation(_)
                | Self::Parse { .. }
                | Self::UnknownMeasurementLocation(_)
                | Self::DegenerateScaling(_)
                | Self::JacobianUnavailable
        )
    }
}

pub(crate) trait LinalgContext<T> {
    fn ctx(self, context: &'static str) -> Result<T>;
}

impl<T> LinalgContext<T> for std::result::Result<T, LinalgError> {
    fn ctx(self, context: &'static str) -> Result<T> {
        self.map_err(|source| Error::Linalg { context, source })
    }
}

impl Error {
    /// The wrapped kernel error, if this came from a matrix kernel.
    pub fn linalg(&self) -> Option<&LinalgError> {
        match self {
            Self::Linalg { source, .. } => Some(source),
            _ => None,
        }
    }
}
