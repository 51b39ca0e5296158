//! Patient health timelines: event ordering, the four token classes, the
//! vocabulary, and the on-disk formats for event streams and token corpora.

mod corpus;
mod event;
mod events_io;
mod hierarchy;
mod interval;
mod quantile;
mod tokenize;
mod vocab;

pub use corpus::{decode_pht1, encode_pht1, TokenCorpus, PHT1_MAGIC};
pub use event::{order_events, vector_variable, ClinicalEvent, NameDictionary, Payload, RawTimeline};
pub use events_io::{read_event_stream, write_event_stream, EventRecord, RecordKind, RecordValue};
pub use hierarchy::{decompose_code, CodeScheme};
pub use interval::{IntervalBin, IntervalLadder, DAY, HOUR, MINUTE, MONTH};
pub use quantile::{fit_quantiles, QuantileSpec};
pub use tokenize::{
    build_vocabulary, detokenize, tokenize_cohort, tokenize_event, tokenize_timeline, EventSketch,
    Pht, TokenizationConfig,
};
pub use vocab::{fnv1a64, TokenClass, TokenDescriptor, Vocabulary, TIMELINE_END, TIMELINE_START};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhtError {
    #[error("event name `{0}` is not in the name dictionary")]
    UnknownEventName(String),
    #[error("non-finite timestamp for event `{0}`")]
    NonFiniteTimestamp(String),
    #[error("timeline `{0}` has no events")]
    EmptyTimeline(String),
    #[error("timeline `{patient}` is out of order at event {index}")]
    OutOfOrder { patient: String, index: usize },
    #[error("variable `{0}` has no finite observations")]
    EmptyVariable(String),
    #[error("unknown quantile variable `{0}`")]
    UnknownVariable(String),
    #[error("non-finite value for variable `{0}`")]
    NonFiniteValue(String),
    #[error("quantile count must be at least 2, got {0}")]
    InvalidQuantileCount(usize),
    #[error("negative time gap {0}")]
    NegativeGap(f64),
    #[error("invalid interval ladder: {0}")]
    InvalidLadder(String),
    #[error("malformed code `{0}`")]
    MalformedCode(String),
    #[error("token `{0}` is not in the vocabulary")]
    TokenNotInVocabulary(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("malformed sequence at position {position}: {reason}")]
    MalformedSequence { position: usize, reason: String },
    #[error("empty cohort")]
    EmptyCohort,
    #[error("invalid corpus file: {0}")]
    InvalidCorpus(String),
    #[error("invalid event record on line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
}
