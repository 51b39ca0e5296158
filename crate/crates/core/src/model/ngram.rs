use std::collections::HashMap;

use rayon::prelude::*;

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct ContextStats {
    pub total: u64,
    /// `(next token, count)` sorted by token id.
    pub next: Vec<(u32, u64)>,
}

type Table = HashMap<Box<[u32]>, ContextStats>;

/// Count-based n-gram model with hierarchical additive smoothing.
///
/// Level 0 is the uniform distribution. Level `k ≥ 1` conditions on the last
/// `k − 1` tokens: for a context seen `c(ctx)` times,
/// `p_k(w) = (c(ctx, w) + αV·p_{k−1}(w)) / (c(ctx) + αV)`; unseen contexts
/// inherit `p_{k−1}`. The unigram level is therefore plain additive-α.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    pub(crate) order: usize,
    pub(crate) alpha: f64,
    pub(crate) vocab_size: usize,
    pub(crate) fingerprint: u64,
    /// `tables[k]` holds contexts of length `k`.
    pub(crate) tables: Vec<Table>,
}

impl NgramModel {
    pub fn fit(
        sequences: &[Vec<u32>],
        order: usize,
        alpha: f64,
        vocab_size: usize,
        fingerprint: u64,
    ) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidConfig("n-gram order must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::InvalidConfig("n-gram alpha must be positive".into()));
        }
        let raw: Vec<HashMap<Box<[u32]>, HashMap<u32, u64>>> = sequences
            .par_chunks(256)
            .map(|chunk| {
                let mut local: Vec<HashMap<Box<[u32]>, HashMap<u32, u64>>> = vec![HashMap::new(); order];
                for seq in chunk {
                    for j in 1..seq.len() {
                        for (k, table) in local.iter_mut().enumerate().take(j.min(order - 1) + 1) {
                            let ctx = &seq[j - k..j];
                            let entry = match table.get_mut(ctx) {
                                Some(e) => e,
                                None => table.entry(ctx.into()).or_default(),
                            };
                            *entry.entry(seq[j]).or_default() += 1;
                        }
                    }
                }
                local
            })
            .reduce(
                || vec![HashMap::new(); order],
                |mut a, b| {
                    for (ta, tb) in a.iter_mut().zip(b) {
                        for (ctx, counts) in tb {
                            let e = ta.entry(ctx).or_default();
                            for (w, c) in counts {
                                *e.entry(w).or_default() += c;
                            }
                        }
                    }
                    a
                },
            );
        let tables = raw
            .into_iter()
            .map(|t| {
                t.into_iter()
                    .map(|(ctx, counts)| {
                        let mut next: Vec<(u32, u64)> = counts.into_iter().collect();
                        next.sort_unstable();
                        (ctx, ContextStats { total: next.iter().map(|x| x.1).sum(), next })
                    })
                    .collect()
            })
            .collect();
        Ok(Self { order, alpha, vocab_size, fingerprint, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of times `context` was observed followed by any token.
    pub fn context_count(&self, context: &[u32]) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .map_or(0, |s| s.total)
    }

    pub fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        let mut p = vec![1.0 / v; self.vocab_size];
        let av = self.alpha * v;
        for k in 0..self.order.min(prefix.len() + 1) {
            let ctx = &prefix[prefix.len() - k..];
            let Some(stats) = self.tables[k].get(ctx) else {
                break;
            };
            let denom = stats.total as f64 + av;
            let scale = av / denom;
            for x in p.iter_mut() {
                *x *= scale;
            }
            for &(w, c) in &stats.next {
                p[w as usize] += c as f64 / denom;
            }
        }
        p
    }
}
