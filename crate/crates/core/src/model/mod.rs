//! Autoregressive generators over PHT token ids.
//!
//! Two backends share one interface: a smoothed n-gram model with exact,
//! closed-form fitting and a small pre-LN GPT-style transformer trained with
//! AdamW. Federation and inference code only sees [`GeneratorParams`].

mod checkpoint;
mod ngram;
mod sampling;
mod train;
mod transformer;

pub use checkpoint::{LoadOptions, CHECKPOINT_VERSION, FTSG_MAGIC};
pub use ngram::NgramModel;
pub use sampling::{apply_temperature, sample_timeline, sample_with, Sampled, StopRule};
pub use train::{grad_check, train_local, train_local_with_report, GradCheckReport, TrainReport};
pub use transformer::{TensorInfo, TransformerShape};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pht::{TokenClass, Vocabulary};
use transformer::Layout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("token id {id} is outside a vocabulary of size {size}")]
    VocabularyMismatch { id: u32, size: usize },
    #[error("empty prefix")]
    EmptyPrefix,
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u16),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint fingerprint {found:016x} does not match vocabulary {expected:016x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ngram,
    Transformer,
}

impl Backend {
    pub fn tag(self) -> u8 {
        match self {
            Backend::Ngram => 0,
            Backend::Transformer => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    Cosine,
    Linear,
    Constant,
}

/// Training hyperparameters. Fields that do not apply to the selected
/// backend are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub backend: Backend,
    pub order: usize,
    pub alpha: f64,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub context: usize,
    pub dropout: f64,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub lr_peak: f64,
    pub lr_floor: f64,
    pub warmup_steps: usize,
    pub decay: LrDecay,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub eval_every: usize,
    /// The returned checkpoint is the best of the last this-many evaluations.
    pub selection_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Ngram,
            order: 6,
            alpha: 0.1,
            layers: 2,
            d_model: 64,
            heads: 4,
            context: 256,
            dropout: 0.1,
            epochs: 1,
            max_steps: None,
            batch_size: 16,
            lr_peak: 6e-4,
            lr_floor: 1e-5,
            warmup_steps: 100,
            decay: LrDecay::Cosine,
            weight_decay: 0.1,
            grad_clip: 1.0,
            seed: 0,
            validation_fraction: 0.1,
            eval_every: 100,
            selection_window: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        match self.backend {
            Backend::Ngram => {
                if self.order == 0 {
                    return bad("order must be at least 1");
                }
                if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                    return bad("alpha must be positive");
                }
            }
            Backend::Transformer => {
                self.shape(1).validate()?;
                if !(self.lr_floor > 0.0 && self.lr_peak >= self.lr_floor && self.lr_peak.is_finite()) {
                    return bad("learning rates need peak >= floor > 0");
                }
                if !(0.0..1.0).contains(&self.dropout) {
                    return bad("dropout must lie in [0, 1)");
                }
                if self.batch_size == 0 || self.eval_every == 0 || self.selection_window == 0 {
                    return bad("batch size, eval interval and selection window must be positive");
                }
                if self.epochs == 0 && self.max_steps.is_none_or(|s| s == 0) {
                    return bad("training needs at least one step");
                }
                if !(self.weight_decay >= 0.0 && self.grad_clip >= 0.0) {
                    return bad("weight decay and clip norm must be non-negative");
                }
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub(crate) fn shape(&self, vocab_size: usize) -> TransformerShape {
        TransformerShape {
            vocab_size,
            context: self.context,
            d_model: self.d_model,
            heads: self.heads,
            layers: self.layers,
        }
    }
}

/// Trained transformer weights plus what inference needs to truncate
/// prefixes.
#[derive(Debug, Clone)]
pub struct TransformerModel {
    pub(crate) layout: Layout,
    pub(crate) fingerprint: u64,
    /// Tokens that make up the leading static block.
    pub(crate) static_ids: Vec<u32>,
    pub(crate) params: Vec<f32>,
}

impl PartialEq for TransformerModel {
    fn eq(&self, other: &Self) -> bool {
        self.layout.shape == other.layout.shape
            && self.fingerprint == other.fingerprint
            && self.static_ids == other.static_ids
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TransformerModel {
    pub fn shape(&self) -> TransformerShape {
        self.layout.shape
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    /// Keeps the static block and the most recent tokens when `prefix`
    /// exceeds the context.
    pub(crate) fn truncate<'a>(&self, prefix: &'a [u32]) -> std::borrow::Cow<'a, [u32]> {
        let c = self.layout.shape.context;
        if prefix.len() <= c {
            return prefix.into();
        }
        let s = static_block_len(prefix, &self.static_ids).min(c / 2);
        let mut out = prefix[..s].to_vec();
        out.extend_from_slice(&prefix[prefix.len() - (c - s)..]);
        out.into()
    }
}

/// Length of `START + leading static tokens`.
pub(crate) fn static_block_len(seq: &[u32], static_ids: &[u32]) -> usize {
    1 + seq.iter().skip(1).take_while(|t| static_ids.contains(t)).count()
}

/// Serializable generator parameters: the only artifact a client shares.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorParams {
    Ngram(NgramModel),
    Transformer(TransformerModel),
}

impl GeneratorParams {
    pub fn backend(&self) -> Backend {
        match self {
            GeneratorParams::Ngram(_) => Backend::Ngram,
            GeneratorParams::Transformer(_) => Backend::Transformer,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        match self {
            GeneratorParams::Ngram(m) => m.fingerprint,
            GeneratorParams::Transformer(m) => m.fingerprint,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            GeneratorParams::Ngram(m) => m.vocab_size,
            GeneratorParams::Transformer(m) => m.layout.shape.vocab_size,
        }
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        let size = self.vocab_size();
        match ids.iter().find(|&&id| id as usize >= size) {
            Some(&id) => Err(ModelError::VocabularyMismatch { id, size }),
            None => Ok(()),
        }
    }

    /// Next-token distribution given a non-empty prefix.
    pub fn next_token_dist(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        if prefix.is_empty() {
            return Err(ModelError::EmptyPrefix);
        }
        self.check_ids(prefix)?;
        Ok(match self {
            GeneratorParams::Ngram(m) => m.next_token_dist(prefix),
            GeneratorParams::Transformer(m) => {
                let window = m.truncate(prefix);
                transformer::last_logprobs(&m.layout, &m.params, &window)
                    .into_iter()
                    .map(f64::exp)
                    .collect()
            }
        })
    }

    /// `log p(x_j | x_<j)` for every `j ≥ 1`.
    pub fn sequence_logprobs(&self, seq: &[u32]) -> Result<Vec<f64>, ModelError> {
        self.check_ids(seq)?;
        Ok(match self {
            GeneratorParams::Ngram(m) => {
                (1..seq.len()).map(|j| m.next_token_dist(&seq[..j])[seq[j] as usize].ln()).collect()
            }
            GeneratorParams::Transformer(m) => {
                let s = static_block_len(seq, &m.static_ids);
                train::windows(seq, m.layout.shape.context, s)
                    .into_iter()
                    .flat_map(|(w, from)| transformer::window_logprobs(&m.layout, &m.params, &w, from))
                    .collect()
            }
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::serialize(self)
    }

    /// Parses a checkpoint without checking its fingerprint.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        checkpoint::deserialize(bytes)
    }

    /// Parses a checkpoint and checks it against `vocab`.
    pub fn load(bytes: &[u8], vocab: &Vocabulary, options: LoadOptions) -> Result<Self, ModelError> {
        checkpoint::load(bytes, vocab.fingerprint(), vocab.len(), options)
    }
}

/// Vocabulary facts a generator needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelVocab {
    pub size: usize,
    pub fingerprint: u64,
    pub static_ids: Vec<u32>,
}

impl From<&Vocabulary> for ModelVocab {
    fn from(v: &Vocabulary) -> Self {
        Self {
            size: v.len(),
            fingerprint: v.fingerprint(),
            static_ids: v.ids_of_class(TokenClass::Static).collect(),
        }
    }
}

/// Mean negative log-likelihood in nats per predicted token.
pub fn nll(params: &GeneratorParams, sequences: &[Vec<u32>]) -> Result<f64, ModelError> {
    let per_seq: Vec<(f64, usize)> = sequences
        .par_iter()
        .map(|s| {
            let lp = params.sequence_logprobs(s)?;
            Ok((-lp.iter().sum::<f64>(), lp.len()))
        })
        .collect::<Result<_, ModelError>>()?;
    let (sum, n) = per_seq.iter().fold((0.0, 0usize), |(a, b), (x, y)| (a + x, b + y));
    if n == 0 {
        return Err(ModelError::EmptyCorpus);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_nll_is_log_v() {
        // An n-gram fit on sequences without targets is uniform.
        let m = NgramModel::fit(&[vec![0]], 3, 1.0, 32, 0).unwrap();
        let g = GeneratorParams::Ngram(m);
        let x = nll(&g, &[vec![0, 5, 9, 31, 2]]).unwrap();
        assert!((x - 32f64.ln()).abs() < 1e-12);
        assert!((x - 3.4657).abs() < 1e-4);
    }

    #[test]
    fn hand_computed_nll() {
        // Order 2, alpha 1, V = 3, corpus [0 1 1 2 0 1 1 2 1 0].
        let seq = vec![0u32, 1, 1, 2, 0, 1, 1, 2, 1, 0];
        let m = NgramModel::fit(std::slice::from_ref(&seq), 2, 1.0, 3, 0).unwrap();
        let g = GeneratorParams::Ngram(m);
        // Targets: 1 1 2 0 1 1 2 1 0 -> unigram counts (2, 5, 2), total 9.
        let uni = [3.0 / 12.0, 6.0 / 12.0, 3.0 / 12.0];
        // Bigram counts: after 0: {1:2}; after 1: {1:2, 2:2, 0:1}; after 2: {0:1, 1:1}.
        let counts = [[0.0, 2.0, 0.0], [1.0, 2.0, 2.0], [1.0, 1.0, 0.0]];
        let mut want = 0.0;
        for j in 1..seq.len() {
            let ctx = seq[j - 1] as usize;
            let row = counts[ctx];
            let tot: f64 = row.iter().sum();
            let w = seq[j] as usize;
            want -= ((row[w] + 3.0 * uni[w]) / (tot + 3.0)).ln();
        }
        want /= 9.0;
        let got = nll(&g, &[seq]).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn rejects_foreign_ids() {
        let m = NgramModel::fit(&[vec![0, 1]], 2, 1.0, 2, 0).unwrap();
        let g = GeneratorParams::Ngram(m);
        assert_eq!(g.next_token_dist(&[5]), Err(ModelError::VocabularyMismatch { id: 5, size: 2 }));
        assert_eq!(g.next_token_dist(&[]), Err(ModelError::EmptyPrefix));
        assert_eq!(nll(&g, &[vec![0]]), Err(ModelError::EmptyCorpus));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let t = TrainConfig { backend: Backend::Transformer, ..Default::default() };
        assert!(t.validate().is_ok());
        assert!(TrainConfig { heads: 5, ..t.clone() }.validate().is_err());
        assert!(TrainConfig { lr_floor: 1e-3, ..t.clone() }.validate().is_err());
        assert!(TrainConfig { context: 1, ..t.clone() }.validate().is_err());
        assert!(TrainConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        let parsed: TrainConfig = toml::from_str("backend = \"transformer\"\nd_model = 16\nheads = 2\n").unwrap();
        assert_eq!(parsed.d_model, 16);
        assert_eq!(parsed.layers, 2);
    }
}
