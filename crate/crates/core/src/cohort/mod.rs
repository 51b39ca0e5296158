//! Ground-truth semi-Markov cohort process with exact outcome oracles.

mod clinic;
mod oracle;
mod process;
mod sample;

pub use clinic::clinic_v1;
pub use oracle::{exact_class_distribution, exact_event_probability, ClassDistribution, TruthOracle};
pub use process::{EmissionSpec, GroundTruthProcess, ProcessDiagnostics, ProcessSpec, StateSpec, TransitionSpec};
pub use sample::{read_truth, sample_cohort, write_truth, SampledCohort, TruthRecord};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("transition row of `{state}` sums to {sum}")]
    RowSum { state: String, sum: f64 },
    #[error("invalid transition {from} -> {to}: {reason}")]
    InvalidTransition { from: String, to: String, reason: String },
    #[error("state `{0}` cannot reach a terminal state")]
    Unreachable(String),
    #[error("invalid emission for `{state}`: {reason}")]
    InvalidEmission { state: String, reason: String },
    #[error("invalid static prior `{attribute}`: {reason}")]
    InvalidPrior { attribute: String, reason: String },
    #[error("walk for patient {patient} exceeded {steps} steps")]
    NonConvergentWalk { patient: u64, steps: usize },
    #[error("state `{0}` belongs to more than one class")]
    OverlappingClasses(String),
    #[error("patient count must be at least 1")]
    EmptyCohort,
    #[error("process file: {0}")]
    Parse(String),
    #[error("truth sidecar: {0}")]
    Truth(String),
}
