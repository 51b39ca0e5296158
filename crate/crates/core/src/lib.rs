//! Federated timeline synthesis.
//!
//! Event streams are tokenized into patient health timelines (PHTs), local
//! autoregressive generators are trained per client, the server samples a
//! pseudo-timeline corpus from the received checkpoints and trains a global
//! generator on it. Zero-shot predictions come from Monte Carlo simulation of
//! future timelines, and fidelity/downstream metrics are aggregated into an
//! overall score.
//!
//! The [`cohort`] module provides a semi-Markov ground-truth process with exact
//! outcome probabilities, used in place of real clinical data.

pub mod cohort;
pub mod eval;
pub mod federation;
pub mod model;
pub mod pht;
pub mod rng;
pub mod zeroshot;

mod error;

pub use error::{Error, Result};

pub use cohort::{GroundTruthProcess, SampledCohort};
pub use eval::{MetricResult, ScoreReport};
pub use federation::{FederationScenario, SynthesisManifest};
pub use model::{GeneratorParams, TrainConfig};
pub use pht::{ClinicalEvent, Payload, Pht, RawTimeline, TokenClass, Vocabulary};
pub use zeroshot::{InferenceTask, TrajectoryBundle};
