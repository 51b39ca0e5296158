//! Server side of the protocol. Inputs are checkpoint bytes and the shared
//! vocabulary; nothing here can open a client corpus.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::manifest::{ClientManifest, SynthesisManifest};
use super::scenario::{ClientSynthesis, Conditioning, FederationScenario};
use super::FederationError;
use crate::model::{sample_with, train_local, GeneratorParams, LoadOptions, ModelVocab, TrainConfig};
use crate::pht::{detokenize, encode_pht1, fnv1a64, Pht, TokenClass, TokenizationConfig, Vocabulary};
use crate::rng::{derive_seed, stream_rng};

const SYNTH_STREAM: u64 = 0x5359_4e54;
/// Attempts per synthetic timeline before it counts as rejected.
pub const MAX_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientCheckpoint {
    pub id: String,
    pub bytes: Vec<u8>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

enum Prefix {
    Fixed(Vec<u32>),
    Histogram(Vec<(Vec<u32>, WeightedIndex<f64>)>),
}

fn resolve(conditioning: &Conditioning, vocab: &Vocabulary) -> Result<Prefix, FederationError> {
    let bad = |m: String| FederationError::InvalidScenario(m);
    match conditioning {
        Conditioning::Unconditional => Ok(Prefix::Fixed(Vec::new())),
        Conditioning::FixedPrefix { tokens } => tokens
            .iter()
            .map(|s| {
                let id = vocab.id(s).map_err(|e| bad(e.to_string()))?;
                if vocab.class(id) == Some(TokenClass::Structural) {
                    return Err(bad(format!("structural token `{s}` in a fixed prefix")));
                }
                Ok(id)
            })
            .collect::<Result<_, _>>()
            .map(Prefix::Fixed),
        Conditioning::MatchStaticHistogram { histogram } => histogram
            .iter()
            .map(|(attr, values)| {
                let mut ids = Vec::new();
                let mut weights = Vec::new();
                for (value, w) in values {
                    let surface = TokenizationConfig::static_surface(attr, value);
                    let id = vocab.id(&surface).map_err(|e| bad(e.to_string()))?;
                    if vocab.class(id) != Some(TokenClass::Static) {
                        return Err(bad(format!("`{surface}` is not a static token")));
                    }
                    ids.push(id);
                    weights.push(*w);
                }
                let dist = WeightedIndex::new(weights).map_err(|e| bad(format!("histogram `{attr}`: {e}")))?;
                Ok((ids, dist))
            })
            .collect::<Result<_, _>>()
            .map(Prefix::Histogram),
    }
}

fn draw_prefix(prefix: &Prefix, start: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut out = vec![start];
    match prefix {
        Prefix::Fixed(t) => out.extend(t),
        Prefix::Histogram(attrs) => out.extend(attrs.iter().map(|(ids, d)| ids[d.sample(rng)])),
    }
    out
}

fn well_formed(tokens: Vec<u32>, vocab: &Vocabulary, structure: &TokenizationConfig) -> Option<Vec<u32>> {
    if tokens.last() != Some(&vocab.end_id()) {
        return None;
    }
    let pht = Pht { patient_id: String::new(), tokens, complete: true };
    pht.validate(vocab).ok()?;
    let events = detokenize(&pht, vocab, structure).ok()?;
    (!events.is_empty()).then_some(pht.tokens)
}

/// Samples `settings.samples` timelines, each retried up to
/// [`MAX_ATTEMPTS`] times until it is well formed. Returns the accepted
/// timelines (in sample order) and the number rejected.
pub fn generate_timelines(
    params: &GeneratorParams,
    vocab: &Vocabulary,
    structure: &TokenizationConfig,
    settings: &ClientSynthesis,
    seed: u64,
) -> Result<(Vec<Vec<u32>>, usize), FederationError> {
    let prefix = resolve(&settings.conditioning, vocab)?;
    let end = vocab.end_id();
    let results: Vec<Option<Vec<u32>>> = (0..settings.samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, &[j]);
            let start = draw_prefix(&prefix, vocab.start_id(), &mut rng);
            for _ in 0..MAX_ATTEMPTS {
                let s = sample_with(params, &start, settings.temperature, settings.max_new, &mut rng, |t| t == end)?;
                if let Some(ok) = well_formed(s.tokens, vocab, structure) {
                    return Ok(Some(ok));
                }
            }
            Ok(None)
        })
        .collect::<Result<_, crate::model::ModelError>>()?;
    let rejected = results.iter().filter(|r| r.is_none()).count();
    Ok((results.into_iter().flatten().collect(), rejected))
}

/// Per-client synthesis seed; depends on the client id, not its position.
pub fn client_seed(master: u64, client: &str) -> u64 {
    derive_seed(master, &[SYNTH_STREAM, fnv1a64(client.as_bytes())])
}

/// Pseudo-PHT corpus from every client's checkpoint, in scenario order.
pub fn synthesize_corpus(
    checkpoints: &[ClientCheckpoint],
    scenario: &FederationScenario,
    vocab: &Vocabulary,
    structure: &TokenizationConfig,
) -> Result<(Vec<Vec<u32>>, SynthesisManifest), FederationError> {
    let per_client: Vec<(Vec<Vec<u32>>, ClientManifest)> = scenario
        .clients
        .par_iter()
        .map(|spec| {
            let ckpt = checkpoints
                .iter()
                .find(|c| c.id == spec.id)
                .ok_or_else(|| FederationError::MissingCheckpoint(spec.id.clone()))?;
            let params = GeneratorParams::load(&ckpt.bytes, vocab, LoadOptions::default())
                .map_err(|e| FederationError::Checkpoint { client: spec.id.clone(), source: e })?;
            let settings = scenario.synthesis_for(spec);
            let seed = client_seed(scenario.seed, &spec.id);
            let (timelines, rejected) = generate_timelines(&params, vocab, structure, &settings, seed)
                .map_err(|e| match e {
                    FederationError::Model(m) => FederationError::Checkpoint { client: spec.id.clone(), source: m },
                    other => other,
                })?;
            if rejected * 5 > settings.samples {
                return Err(FederationError::TooManyRejections {
                    client: spec.id.clone(),
                    rejected,
                    samples: settings.samples,
                });
            }
            let entry = ClientManifest {
                id: spec.id.clone(),
                checkpoint_sha256: sha256_hex(&ckpt.bytes),
                samples: settings.samples,
                emitted: timelines.len(),
                rejected,
                temperature: settings.temperature,
                seed: format!("{seed:016x}"),
            };
            Ok((timelines, entry))
        })
        .collect::<Result<_, FederationError>>()?;
    let mut corpus = Vec::new();
    let mut clients = Vec::new();
    for (t, m) in per_client {
        corpus.extend(t);
        clients.push(m);
    }
    let manifest = SynthesisManifest {
        clients,
        corpus_sha256: sha256_hex(&encode_pht1(vocab.fingerprint(), &corpus)),
        timelines: corpus.len(),
    };
    Ok((corpus, manifest))
}

/// Trains the global generator on the pseudo corpus.
pub fn train_global(
    pseudo: &[Vec<u32>],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Vec<u8>, FederationError> {
    if pseudo.is_empty() {
        return Err(FederationError::EmptyCorpus);
    }
    let params = train_local(pseudo, ModelVocab::from(vocab), config).map_err(|e| match e {
        crate::model::ModelError::EmptyCorpus => FederationError::EmptyCorpus,
        e => FederationError::Model(e),
    })?;
    Ok(params.to_bytes())
}
