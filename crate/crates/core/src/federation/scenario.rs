use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FederationError;
use crate::model::TrainConfig;

/// How each synthetic timeline is seeded before free generation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Conditioning {
    #[default]
    Unconditional,
    /// One static token per attribute, drawn from `attribute -> value -> weight`.
    MatchStaticHistogram { histogram: BTreeMap<String, BTreeMap<String, f64>> },
    /// Token surfaces placed right after TIMELINE_START.
    FixedPrefix { tokens: Vec<String> },
}

impl Conditioning {
    fn validate(&self) -> Result<(), FederationError> {
        match self {
            Conditioning::Unconditional => Ok(()),
            Conditioning::FixedPrefix { .. } => Ok(()),
            Conditioning::MatchStaticHistogram { histogram } => {
                for (attr, values) in histogram {
                    let total: f64 = values.values().sum();
                    if values.values().any(|w| !(*w >= 0.0 && w.is_finite())) || !(total > 0.0) {
                        return Err(FederationError::InvalidScenario(format!(
                            "histogram for `{attr}` needs non-negative weights with a positive sum"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub id: String,
    pub corpus: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    /// Overrides `synthesis.samples`.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Overrides `synthesis.temperature`.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Overrides `synthesis.conditioning`, e.g. with a client's published
    /// static histogram.
    #[serde(default)]
    pub conditioning: Option<Conditioning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSpec {
    pub samples: usize,
    pub temperature: f64,
    /// Generation budget per timeline, in tokens after the prefix.
    pub max_new: usize,
    pub conditioning: Conditioning,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self { samples: 1000, temperature: 1.0, max_new: 2048, conditioning: Conditioning::Unconditional }
    }
}

/// Per-client synthesis settings after overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSynthesis {
    pub samples: usize,
    pub temperature: f64,
    pub max_new: usize,
    pub conditioning: Conditioning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationScenario {
    pub name: String,
    pub seed: u64,
    /// Shared vocabulary (TSV) all corpora are tokenized against.
    pub vocabulary: PathBuf,
    /// Shared tokenizer configuration (JSON).
    pub tokenizer: PathBuf,
    pub clients: Vec<ClientSpec>,
    #[serde(default)]
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub global: TrainConfig,
}

impl FederationScenario {
    pub fn validate(&self) -> Result<(), FederationError> {
        if self.clients.is_empty() {
            return Err(FederationError::InvalidScenario("no clients".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(FederationError::InvalidScenario(format!("bad scenario name `{}`", self.name)));
        }
        let mut seen = BTreeSet::new();
        for c in &self.clients {
            if c.id.is_empty() || c.id.contains(['/', '\\']) {
                return Err(FederationError::InvalidScenario(format!("bad client id `{}`", c.id)));
            }
            if !seen.insert(&c.id) {
                return Err(FederationError::DuplicateClient(c.id.clone()));
            }
            let s = self.synthesis_for(c);
            if s.samples == 0 {
                return Err(FederationError::InvalidScenario(format!("client `{}` has M = 0", c.id)));
            }
            if !(s.temperature > 0.0 && s.temperature.is_finite()) {
                return Err(FederationError::InvalidScenario(format!(
                    "client `{}` has non-positive temperature {}",
                    c.id, s.temperature
                )));
            }
            s.conditioning.validate()?;
            c.train.validate().map_err(|e| FederationError::InvalidScenario(format!("client `{}`: {e}", c.id)))?;
        }
        if self.synthesis.max_new == 0 {
            return Err(FederationError::InvalidScenario("max_new must be positive".into()));
        }
        self.global.validate().map_err(|e| FederationError::InvalidScenario(format!("global: {e}")))?;
        Ok(())
    }

    pub fn synthesis_for(&self, client: &ClientSpec) -> ClientSynthesis {
        ClientSynthesis {
            samples: client.samples.unwrap_or(self.synthesis.samples),
            temperature: client.temperature.unwrap_or(self.synthesis.temperature),
            max_new: self.synthesis.max_new,
            conditioning: client.conditioning.clone().unwrap_or_else(|| self.synthesis.conditioning.clone()),
        }
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, FederationError> {
        let mut s: Self = toml::from_str(text).map_err(|e| FederationError::InvalidScenario(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut s.vocabulary);
        fix(&mut s.tokenizer);
        for c in &mut s.clients {
            fix(&mut c.corpus);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}
