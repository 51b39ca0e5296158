//! Two-stage federated timeline synthesis: clients train local generators
//! and ship checkpoint bytes; the server samples a pseudo-timeline corpus
//! from them and trains the global generator on it.

mod client;
mod manifest;
mod scenario;
mod server;

pub use client::{load_client_corpus, publish_static_histogram, run_client};
pub use manifest::{ClientManifest, RunManifest, SynthesisManifest};
pub use scenario::{ClientSpec, ClientSynthesis, Conditioning, FederationScenario, SynthesisSpec};
pub use server::{
    client_seed, generate_timelines, sha256_hex, synthesize_corpus, train_global, ClientCheckpoint,
    MAX_ATTEMPTS,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::ModelError;
use crate::pht::{TokenCorpus, TokenizationConfig, Vocabulary};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("duplicate client id `{0}`")]
    DuplicateClient(String),
    #[error("client `{client}` corpus fingerprint {found:016x} does not match vocabulary {expected:016x}")]
    VocabularyMismatch { client: String, expected: u64, found: u64 },
    #[error("client `{client}` training failed: {source}")]
    Training { client: String, source: ModelError },
    #[error("no checkpoint for client `{0}`")]
    MissingCheckpoint(String),
    #[error("checkpoint of client `{client}` is unusable: {source}")]
    Checkpoint { client: String, source: ModelError },
    #[error("client `{client}`: {rejected} of {samples} synthetic timelines rejected")]
    TooManyRejections { client: String, rejected: usize, samples: usize },
    #[error("the pseudo corpus is empty")]
    EmptyCorpus,
    #[error("{}", .0.iter().map(|(c, e)| format!("client `{c}`: {e}")).collect::<Vec<_>>().join("; "))]
    Clients(Vec<(String, Box<crate::Error>)>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct FtsArtifacts {
    pub checkpoints: Vec<ClientCheckpoint>,
    pub synthetic: TokenCorpus,
    pub global: Vec<u8>,
    pub manifest: RunManifest,
}

impl FtsArtifacts {
    /// Writes `<root>/<scenario>/{clients/<id>.ftsg, synthetic.pht1, manifest, global.ftsg}`
    /// and returns the scenario directory.
    pub fn write(&self, root: &Path) -> crate::Result<PathBuf> {
        let dir = root.join(&self.manifest.scenario);
        std::fs::create_dir_all(dir.join("clients"))?;
        for c in &self.checkpoints {
            std::fs::write(dir.join("clients").join(format!("{}.ftsg", c.id)), &c.bytes)?;
        }
        std::fs::write(dir.join("synthetic.pht1"), self.synthetic.to_bytes())?;
        std::fs::write(dir.join("manifest"), self.manifest.to_text())?;
        std::fs::write(dir.join("global.ftsg"), &self.global)?;
        Ok(dir)
    }
}

/// Runs the protocol on corpora already in memory (`corpora[i]` belongs to
/// `scenario.clients[i]`).
pub fn run_fts_with(
    scenario: &FederationScenario,
    vocab: &Vocabulary,
    tokenizer: &TokenizationConfig,
    corpora: &[TokenCorpus],
) -> crate::Result<FtsArtifacts> {
    scenario.validate()?;
    if corpora.len() != scenario.clients.len() {
        return Err(FederationError::InvalidScenario(format!(
            "{} corpora for {} clients",
            corpora.len(),
            scenario.clients.len()
        ))
        .into());
    }
    let outcomes: Vec<Result<ClientCheckpoint, (String, crate::Error)>> = scenario
        .clients
        .par_iter()
        .zip(corpora)
        .map(|(spec, corpus)| {
            run_client(&spec.id, corpus, vocab, &spec.train)
                .map(|bytes| ClientCheckpoint { id: spec.id.clone(), bytes })
                .map_err(|e| (spec.id.clone(), e.into()))
        })
        .collect();
    gather(outcomes).and_then(|ckpts| server_stage(scenario, vocab, tokenizer, ckpts))
}

/// Runs the protocol, loading each client's corpus from its scenario path.
pub fn run_fts(scenario: &FederationScenario) -> crate::Result<FtsArtifacts> {
    scenario.validate()?;
    let vocab = Vocabulary::from_tsv(&std::fs::read_to_string(&scenario.vocabulary)?)?;
    let tokenizer: TokenizationConfig = serde_json::from_str(&std::fs::read_to_string(&scenario.tokenizer)?)
        .map_err(|e| FederationError::InvalidScenario(format!("tokenizer config: {e}")))?;
    let outcomes: Vec<Result<ClientCheckpoint, (String, crate::Error)>> = scenario
        .clients
        .par_iter()
        .map(|spec| {
            let corpus = load_client_corpus(&spec.corpus).map_err(|e| (spec.id.clone(), e))?;
            run_client(&spec.id, &corpus, &vocab, &spec.train)
                .map(|bytes| ClientCheckpoint { id: spec.id.clone(), bytes })
                .map_err(|e| (spec.id.clone(), e.into()))
        })
        .collect();
    gather(outcomes).and_then(|ckpts| server_stage(scenario, &vocab, &tokenizer, ckpts))
}

fn gather(
    outcomes: Vec<Result<ClientCheckpoint, (String, crate::Error)>>,
) -> crate::Result<Vec<ClientCheckpoint>> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => ok.push(c),
            Err((id, e)) => failed.push((id, Box::new(e))),
        }
    }
    if failed.is_empty() {
        Ok(ok)
    } else {
        Err(FederationError::Clients(failed).into())
    }
}

fn server_stage(
    scenario: &FederationScenario,
    vocab: &Vocabulary,
    tokenizer: &TokenizationConfig,
    checkpoints: Vec<ClientCheckpoint>,
) -> crate::Result<FtsArtifacts> {
    let (pseudo, synthesis) = synthesize_corpus(&checkpoints, scenario, vocab, tokenizer)?;
    let global = train_global(&pseudo, vocab, &scenario.global)?;
    let manifest = RunManifest {
        scenario: scenario.name.clone(),
        seed: format!("{:016x}", scenario.seed),
        vocabulary_fingerprint: format!("{:016x}", vocab.fingerprint()),
        global_sha256: sha256_hex(&global),
        synthesis,
    };
    Ok(FtsArtifacts {
        checkpoints,
        synthetic: TokenCorpus { fingerprint: vocab.fingerprint(), sequences: pseudo },
        global,
        manifest,
    })
}
