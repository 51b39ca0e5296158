//! Zero-shot inference by Monte Carlo simulation of future timelines, and the
//! harness that turns a cohort into labelled task instances.

mod instances;
mod simulate;
mod task;

pub use instances::{
    build_task_instances, cut_at_anchor, read_inference_csv, run_inference, write_inference_csv, CohortLabels,
    CsvKind, Estimate, InferenceRow, Label, LabelOracle, TaskInstance, TaskInstances,
};
pub use simulate::{
    estimate_binary, estimate_multiclass, estimate_regression, simulate_fphts, BinaryEstimate, BundleKind,
    MulticlassEstimate, Outcome, RegressionEstimate, TrajectoryBundle,
};
pub use task::{InferenceTask, ResolvedTask, Rule, TaskKind};

use thiserror::Error;

use crate::cohort::CohortError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("task token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("estimator does not match the bundle kind")]
    KindMismatch,
    #[error("every trajectory was censored")]
    AllCensored,
    #[error("no task instances ({without_anchor} without anchor, {unlabeled} unlabeled)")]
    NoInstances { without_anchor: usize, unlabeled: usize },
    #[error("estimates file: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}
