use std::collections::BTreeMap;
use std::path::Path;

use super::FederationError;
use crate::model::{train_local, ModelVocab, TrainConfig};
use crate::pht::{TokenClass, TokenCorpus, Vocabulary};

/// Trains a client's local generator. The checkpoint is the only output.
pub fn run_client(
    id: &str,
    corpus: &TokenCorpus,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Vec<u8>, FederationError> {
    if corpus.fingerprint != vocab.fingerprint() {
        return Err(FederationError::VocabularyMismatch {
            client: id.to_string(),
            expected: vocab.fingerprint(),
            found: corpus.fingerprint,
        });
    }
    let params = train_local(&corpus.sequences, ModelVocab::from(vocab), config)
        .map_err(|e| FederationError::Training { client: id.to_string(), source: e })?;
    Ok(params.to_bytes())
}

pub fn load_client_corpus(path: &Path) -> crate::Result<TokenCorpus> {
    Ok(TokenCorpus::from_bytes(&std::fs::read(path)?)?)
}

/// Static-token counts per attribute, the metadata a client may publish for
/// demographically matched synthesis.
pub fn publish_static_histogram(
    corpus: &TokenCorpus,
    vocab: &Vocabulary,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for &id in corpus.sequences.iter().flatten() {
        if vocab.class(id) != Some(TokenClass::Static) {
            continue;
        }
        let surface = vocab.surface(id).unwrap_or_default();
        if let Some((attr, value)) = surface.split_once(':') {
            *out.entry(attr.to_string()).or_default().entry(value.to_string()).or_default() += 1.0;
        }
    }
    out
}
