use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arc length {s} outside track domain [0, {length}]")]
    OutOfTrack { s: f64, length: f64 },

    #[error("curvilinear singularity: 1 - n*kappa = {denominator:e} (n = {n}, kappa = {kappa})")]
    Singularity {
        n: f64,
        kappa: f64,
        denominator: f64,
    },

    /// Context wrappers render their cause inline and expose no `source()`,
    /// so chained reporters print it once.
    #[error("stage {stage}: {inner}")]
    AtStage { stage: usize, inner: Box<Error> },

    #[error("iteration {iteration}: {inner}")]
    AtIteration { iteration: usize, inner: Box<Error> },

    #[error("singular linear system at stage {stage} (condition estimate {condition:e})")]
    SingularSystem { stage: usize, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("scenario validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::AtStage {
            stage,
            inner: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            inner: Box::new(self),
        }
    }

    /// Innermost error, with stage/iteration context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStage { inner, .. } | Error::AtIteration { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// Stage index attached to this error, if any.
    pub fn stage(&self) -> Option<usize> {
        match self {
            Error::AtStage { stage, .. } => Some(*stage),
            Error::SingularSystem { stage, .. } => Some(*stage),
            Error::AtIteration { inner, .. } => inner.stage(),
            _ => None,
        }
    }
}
