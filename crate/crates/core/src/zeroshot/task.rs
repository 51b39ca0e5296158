use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::pht::{vector_variable, TokenClass, TokenizationConfig, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Binary {
        positive: Vec<String>,
    },
    /// Classes are tried in order; the first class token sampled decides.
    Multiclass {
        classes: Vec<Vec<String>>,
    },
    /// Value of dimension `dimension` at the first `event` in the future,
    /// decoded as the midpoint of its quantile bin.
    Regression {
        event: String,
        #[serde(default)]
        dimension: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTask {
    pub name: String,
    /// Token surface at whose last occurrence the prefix is cut.
    pub anchor: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    /// Maximum new tokens per trajectory.
    pub horizon: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Ground-truth label window in events after the anchor; unbounded when
    /// absent.
    #[serde(default)]
    pub label_window: Option<usize>,
}

fn default_trajectories() -> usize {
    100
}

fn default_temperature() -> f64 {
    1.0
}

/// Token-id view of a task over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Binary(BTreeSet<u32>),
    /// Token id to class index.
    Multiclass { classes: BTreeMap<u32, usize>, count: usize },
    Regression { event: u32, dimension: usize, midpoints: Vec<f64>, quantiles: BTreeMap<u32, usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTask {
    pub task: InferenceTask,
    pub anchor: u32,
    pub rule: Rule,
    pub end: u32,
}

impl InferenceTask {
    pub fn from_toml(text: &str) -> Result<Self, InferenceError> {
        let t: Self = toml::from_str(text).map_err(|e| InferenceError::InvalidTask(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task serializes")
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidTask(format!("{}: {m}", self.name)));
        if self.trajectories == 0 {
            return bad("N must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        match &self.kind {
            TaskKind::Binary { positive } if positive.is_empty() => bad("empty positive set"),
            TaskKind::Multiclass { classes } => {
                if classes.len() < 2 || classes.iter().any(Vec::is_empty) {
                    return bad("need at least two non-empty classes");
                }
                let mut seen = BTreeSet::new();
                for t in classes.iter().flatten() {
                    if !seen.insert(t) {
                        return bad(&format!("token `{t}` is in more than one class"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Maps surfaces to ids. Regression tasks need the tokenizer for bin
    /// midpoints.
    pub fn resolve(
        &self,
        vocab: &Vocabulary,
        tokenizer: Option<&TokenizationConfig>,
    ) -> Result<ResolvedTask, InferenceError> {
        self.validate()?;
        let id = |s: &str| vocab.id(s).map_err(|_| InferenceError::UnknownToken(s.to_string()));
        let rule = match &self.kind {
            TaskKind::Binary { positive } => Rule::Binary(positive.iter().map(|s| id(s)).collect::<Result<_, _>>()?),
            TaskKind::Multiclass { classes } => {
                let mut map = BTreeMap::new();
                for (c, set) in classes.iter().enumerate() {
                    for s in set {
                        map.insert(id(s)?, c);
                    }
                }
                Rule::Multiclass { classes: map, count: classes.len() }
            }
            TaskKind::Regression { event, dimension } => {
                let ev = id(event)?;
                if vocab.class(ev) != Some(TokenClass::EventName) {
                    return Err(InferenceError::InvalidTask(format!("`{event}` is not an event name")));
                }
                let config = tokenizer.ok_or_else(|| {
                    InferenceError::InvalidTask("regression tasks need the tokenizer configuration".into())
                })?;
                let variable = if *dimension == 0 && config.quantiles.contains(event) {
                    event.clone()
                } else {
                    vector_variable(event, *dimension)
                };
                let midpoints = (0..config.quantiles.q)
                    .map(|q| config.quantiles.midpoint(&variable, q))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| InferenceError::InvalidTask(format!("no quantile variable `{variable}`")))?;
                let quantiles = (0..config.quantiles.q)
                    .filter_map(|q| vocab.id(&TokenizationConfig::quantile_surface(q)).ok().map(|i| (i, q)))
                    .collect();
                Rule::Regression { event: ev, dimension: *dimension, midpoints, quantiles }
            }
        };
        Ok(ResolvedTask { task: self.clone(), anchor: id(&self.anchor)?, rule, end: vocab.end_id() })
    }
}
