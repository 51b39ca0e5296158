use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PhtError;

/// Raw event payload. Multimodal payloads are not represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    None,
    Scalar { variable: String, value: f64 },
    Vector { variables: Vec<String>, values: Vec<f64> },
    Code(String),
}

impl Payload {
    /// Builds a numeric payload using the stream naming convention: a single
    /// value is tracked under the event name, vector dimension `i` under
    /// `name[i]`.
    pub fn numeric(event_name: &str, values: &[f64]) -> Payload {
        match values {
            [] => Payload::None,
            [v] => Payload::Scalar { variable: event_name.to_string(), value: *v },
            vs => Payload::Vector {
                variables: (0..vs.len()).map(|i| vector_variable(event_name, i)).collect(),
                values: vs.to_vec(),
            },
        }
    }

    /// `(variable, value)` pairs in dimension order.
    pub fn scalars(&self) -> Vec<(&str, f64)> {
        match self {
            Payload::Scalar { variable, value } => vec![(variable.as_str(), *value)],
            Payload::Vector { variables, values } => {
                variables.iter().map(String::as_str).zip(values.iter().copied()).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Variable name of dimension `dim` of a vector-valued event.
pub fn vector_variable(event_name: &str, dim: usize) -> String {
    format!("{event_name}[{dim}]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    /// Seconds since the cohort epoch.
    pub time: f64,
    pub name: String,
    pub payload: Payload,
}

impl ClinicalEvent {
    pub fn new(time: f64, name: impl Into<String>, payload: Payload) -> Self {
        Self { time, name: name.into(), payload }
    }
}

/// Alphabetically sorted event-name dictionary; the index of a name is the
/// secondary ordering key that breaks timestamp ties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameDictionary {
    names: Vec<String>,
}

impl NameDictionary {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn from_timelines<'a>(timelines: impl IntoIterator<Item = &'a RawTimeline>) -> Self {
        Self::new(timelines.into_iter().flat_map(|t| t.events.iter().map(|e| e.name.clone())))
    }

    pub fn key(&self, name: &str) -> Result<u32, PhtError> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map(|i| i as u32)
            .map_err(|_| PhtError::UnknownEventName(name.to_string()))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Sorts events by `(timestamp, secondary key)`. Events with identical keys
/// keep their input order.
pub fn order_events(
    events: Vec<ClinicalEvent>,
    dictionary: &NameDictionary,
) -> Result<Vec<ClinicalEvent>, PhtError> {
    let mut keyed = events
        .into_iter()
        .map(|e| {
            if !e.time.is_finite() {
                return Err(PhtError::NonFiniteTimestamp(e.name.clone()));
            }
            Ok((dictionary.key(&e.name)?, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    keyed.sort_by(|(ka, a), (kb, b)| lex_cmp((a.time, *ka), (b.time, *kb)));
    Ok(keyed.into_iter().map(|(_, e)| e).collect())
}

fn lex_cmp(a: (f64, u32), b: (f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// One patient's ordered events plus time-independent attributes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTimeline {
    pub patient_id: String,
    /// Attribute name to categorical value; iteration order is alphabetical.
    pub statics: BTreeMap<String, String>,
    pub events: Vec<ClinicalEvent>,
}

impl RawTimeline {
    /// Checks the tokenization preconditions: at least one event, finite
    /// timestamps, and `(time, key)` pairs in non-decreasing lexicographic
    /// order.
    pub fn validate(&self, dictionary: &NameDictionary) -> Result<(), PhtError> {
        if self.events.is_empty() {
            return Err(PhtError::EmptyTimeline(self.patient_id.clone()));
        }
        let mut prev: Option<(f64, u32)> = None;
        for (index, e) in self.events.iter().enumerate() {
            if !e.time.is_finite() {
                return Err(PhtError::NonFiniteTimestamp(e.name.clone()));
            }
            let key = (e.time, dictionary.key(&e.name)?);
            if let Some(p) = prev {
                if lex_cmp(p, key) == Ordering::Greater {
                    return Err(PhtError::OutOfOrder { patient: self.patient_id.clone(), index });
                }
            }
            prev = Some(key);
        }
        Ok(())
    }
}
