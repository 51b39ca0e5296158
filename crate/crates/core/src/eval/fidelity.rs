use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::pht::{TokenClass, Vocabulary};

/// Token classes that count as codes for fidelity metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenFilter {
    /// Everything except TIMELINE_START / TIMELINE_END.
    NonStructural,
    /// Hierarchical code tokens only.
    CodesOnly,
    Classes(BTreeSet<TokenClass>),
}

impl Default for TokenFilter {
    fn default() -> Self {
        TokenFilter::NonStructural
    }
}

impl TokenFilter {
    pub fn accepts(&self, class: TokenClass) -> bool {
        match self {
            TokenFilter::NonStructural => class != TokenClass::Structural,
            TokenFilter::CodesOnly => class == TokenClass::Hierarchical,
            TokenFilter::Classes(set) => set.contains(&class),
        }
    }
}

pub const DEFAULT_TRUNCATION: usize = 256;

fn check(truncation: usize, real: &[Vec<u32>], synth: &[Vec<u32>]) -> Result<(), EvalError> {
    if truncation == 0 {
        return Err(EvalError::InvalidInput("truncation length must be at least 1".into()));
    }
    if real.is_empty() || synth.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(())
}

fn code_counts(seq: &[u32], vocab: &Vocabulary, filter: &TokenFilter, truncation: usize) -> BTreeMap<u32, f64> {
    let mut c = BTreeMap::new();
    for &t in seq.iter().take(truncation) {
        if vocab.class(t).is_some_and(|k| filter.accepts(k)) {
            *c.entry(t).or_insert(0.0) += 1.0;
        }
    }
    c
}

/// `1 − SSE/SST` of `synth` against `real` over the union of keys.
fn r2(real: &BTreeMap<u32, f64>, synth: &BTreeMap<u32, f64>) -> Result<f64, EvalError> {
    let keys: BTreeSet<u32> = real.keys().chain(synth.keys()).copied().collect();
    let r: Vec<f64> = keys.iter().map(|k| real.get(k).copied().unwrap_or(0.0)).collect();
    let s: Vec<f64> = keys.iter().map(|k| synth.get(k).copied().unwrap_or(0.0)).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let sst: f64 = r.iter().map(|x| (x - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(EvalError::DegenerateReal);
    }
    let sse: f64 = r.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

fn proportions(counts: BTreeMap<u32, f64>) -> Option<BTreeMap<u32, f64>> {
    let total: f64 = counts.values().sum();
    (total > 0.0).then(|| counts.into_iter().map(|(k, v)| (k, v / total)).collect())
}

/// R² between corpus-level code proportions.
pub fn unigram_r2(
    real: &[Vec<u32>],
    synth: &[Vec<u32>],
    vocab: &Vocabulary,
    filter: &TokenFilter,
    truncation: usize,
) -> Result<f64, EvalError> {
    check(truncation, real, synth)?;
    let pooled = |corpus: &[Vec<u32>]| {
        let mut total = BTreeMap::new();
        for s in corpus {
            for (k, v) in code_counts(s, vocab, filter, truncation) {
                *total.entry(k).or_insert(0.0) += v;
            }
        }
        proportions(total).ok_or(EvalError::EmptyCorpus)
    };
    r2(&pooled(real)?, &pooled(synth)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimwiseR2 {
    pub r2: f64,
    /// Patients without any code, per corpus.
    pub skipped_real: usize,
    pub skipped_synth: usize,
}

/// R² between the mean per-patient code-proportion vectors.
pub fn dimwise_r2(
    real: &[Vec<u32>],
    synth: &[Vec<u32>],
    vocab: &Vocabulary,
    filter: &TokenFilter,
    truncation: usize,
) -> Result<DimwiseR2, EvalError> {
    check(truncation, real, synth)?;
    let mean_vector = |corpus: &[Vec<u32>]| {
        let mut sum = BTreeMap::new();
        let mut used = 0usize;
        for s in corpus {
            if let Some(v) = proportions(code_counts(s, vocab, filter, truncation)) {
                used += 1;
                for (k, x) in v {
                    *sum.entry(k).or_insert(0.0) += x;
                }
            }
        }
        if used == 0 {
            return Err(EvalError::EmptyCorpus);
        }
        let mean = sum.into_iter().map(|(k, v)| (k, v / used as f64)).collect::<BTreeMap<_, _>>();
        Ok((mean, corpus.len() - used))
    };
    let (r, skipped_real) = mean_vector(real)?;
    let (s, skipped_synth) = mean_vector(synth)?;
    Ok(DimwiseR2 { r2: r2(&r, &s)?, skipped_real, skipped_synth })
}
