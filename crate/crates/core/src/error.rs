use thiserror::Error;

use crate::cohort::CohortError;
use crate::eval::EvalError;
use crate::federation::FederationError;
use crate::model::ModelError;
use crate::pht::PhtError;
use crate::zeroshot::InferenceError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Pht(#[from] PhtError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Pht(_) => "Tokenization",
            Error::Cohort(_) => "Cohort",
            Error::Model(_) => "Model",
            Error::Federation(_) => "Federation",
            Error::Inference(_) => "Inference",
            Error::Eval(_) => "Evaluation",
            Error::Io(_) => "IoFailure",
        }
    }
}
