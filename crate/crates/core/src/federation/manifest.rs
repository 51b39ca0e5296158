use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientManifest {
    pub id: String,
    pub checkpoint_sha256: String,
    /// Requested sample count M.
    pub samples: usize,
    /// Timelines that made it into the pseudo corpus.
    pub emitted: usize,
    pub rejected: usize,
    pub temperature: f64,
    /// Derived synthesis seed, hex.
    pub seed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisManifest {
    pub clients: Vec<ClientManifest>,
    pub corpus_sha256: String,
    pub timelines: usize,
}

impl SynthesisManifest {
    /// Requested samples equal emitted plus rejected, and emitted sums to the
    /// corpus size.
    pub fn is_consistent(&self) -> bool {
        self.clients.iter().all(|c| c.samples == c.emitted + c.rejected)
            && self.clients.iter().map(|c| c.emitted).sum::<usize>() == self.timelines
    }
}

/// The `manifest` artifact of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: String,
    /// Master seed, hex.
    pub seed: String,
    pub vocabulary_fingerprint: String,
    pub global_sha256: String,
    pub synthesis: SynthesisManifest,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
