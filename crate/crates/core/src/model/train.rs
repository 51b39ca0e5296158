use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ngram::NgramModel;
use super::transformer::{self, Fault, Layout};
use super::{
    nll, static_block_len, Backend, GeneratorParams, LrDecay, ModelError, ModelVocab, TrainConfig,
    TransformerModel,
};
use crate::rng::{derive_seed, stream_rng};

const INIT_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Splits a sequence into model windows of at most `context + 1` tokens.
///
/// Each returned `(window, loss_from)` scores the targets at positions
/// `≥ loss_from`; across windows every target of `seq` is scored exactly
/// once. Windows after the first start with the static block followed by
/// overlapping recent history.
pub(crate) fn windows(seq: &[u32], context: usize, static_len: usize) -> Vec<(Vec<u32>, usize)> {
    if seq.len() <= context + 1 {
        return vec![(seq.to_vec(), 1)];
    }
    let s = static_len.min(context / 2).max(1);
    let body = context + 1 - s;
    let overlap = body / 2;
    let mut out = vec![(seq[..context + 1].to_vec(), 1)];
    let mut next = context + 1;
    while next < seq.len() {
        let a = next - overlap;
        let e = (a + body).min(seq.len());
        let mut w = seq[..s].to_vec();
        w.extend_from_slice(&seq[a..e]);
        out.push((w, s + overlap));
        next = e;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training NLL of each optimizer step.
    pub train_loss: Vec<f64>,
    /// `(step, validation NLL)` for every evaluation.
    pub evaluations: Vec<(usize, f64)>,
    /// Step whose parameters were returned.
    pub selected_step: Option<usize>,
}

pub fn train_local(
    sequences: &[Vec<u32>],
    vocab: impl Into<ModelVocab>,
    config: &TrainConfig,
) -> Result<GeneratorParams, ModelError> {
    train_local_with_report(sequences, vocab, config).map(|(p, _)| p)
}

pub fn train_local_with_report(
    sequences: &[Vec<u32>],
    vocab: impl Into<ModelVocab>,
    config: &TrainConfig,
) -> Result<(GeneratorParams, TrainReport), ModelError> {
    let vocab = vocab.into();
    config.validate()?;
    if sequences.iter().all(|s| s.len() < 2) {
        return Err(ModelError::EmptyCorpus);
    }
    if let Some(&id) = sequences.iter().flatten().find(|&&id| id as usize >= vocab.size) {
        return Err(ModelError::VocabularyMismatch { id, size: vocab.size });
    }
    match config.backend {
        Backend::Ngram => {
            let m = NgramModel::fit(sequences, config.order, config.alpha, vocab.size, vocab.fingerprint)?;
            Ok((GeneratorParams::Ngram(m), TrainReport::default()))
        }
        Backend::Transformer => train_transformer(sequences, &vocab, config),
    }
}

fn lr_at(config: &TrainConfig, step: usize, total: usize) -> f64 {
    if step < config.warmup_steps {
        return config.lr_peak * (step + 1) as f64 / config.warmup_steps as f64;
    }
    let span = total.saturating_sub(config.warmup_steps).max(1) as f64;
    let progress = ((step - config.warmup_steps) as f64 / span).min(1.0);
    let range = config.lr_peak - config.lr_floor;
    match config.decay {
        LrDecay::Cosine => config.lr_floor + 0.5 * range * (1.0 + (std::f64::consts::PI * progress).cos()),
        LrDecay::Linear => config.lr_peak - range * progress,
        LrDecay::Constant => config.lr_peak,
    }
}

struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    decay_mask: Vec<bool>,
}

impl AdamW {
    const B1: f64 = 0.9;
    const B2: f64 = 0.95;
    const EPS: f64 = 1e-8;

    fn new(layout: &Layout) -> Self {
        let mut decay_mask = vec![false; layout.total];
        for t in &layout.tensors {
            if t.shape.len() >= 2 {
                decay_mask[t.offset..t.offset + t.len()].fill(true);
            }
        }
        Self { m: vec![0.0; layout.total], v: vec![0.0; layout.total], t: 0, decay_mask }
    }

    fn step(&mut self, p: &mut [f32], g: &[f32], lr: f64, weight_decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::B1.powi(self.t);
        let bc2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..p.len() {
            let gi = f64::from(g[i]);
            let m = Self::B1 * f64::from(self.m[i]) + (1.0 - Self::B1) * gi;
            let v = Self::B2 * f64::from(self.v[i]) + (1.0 - Self::B2) * gi * gi;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            let mut pi = f64::from(p[i]);
            if self.decay_mask[i] {
                pi -= lr * weight_decay * pi;
            }
            pi -= lr * (m / bc1) / ((v / bc2).sqrt() + Self::EPS);
            p[i] = pi as f32;
        }
    }
}

fn train_transformer(
    sequences: &[Vec<u32>],
    vocab: &ModelVocab,
    config: &TrainConfig,
) -> Result<(GeneratorParams, TrainReport), ModelError> {
    let shape = config.shape(vocab.size);
    let layout = Layout::new(shape);
    let mut params = layout.init(&mut stream_rng(config.seed, &[INIT_STREAM]));

    let usable: Vec<&Vec<u32>> = sequences.iter().filter(|s| s.len() >= 2).collect();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut stream_rng(config.seed, &[SPLIT_STREAM]));
    let n_val = if usable.len() >= 2 {
        ((usable.len() as f64 * config.validation_fraction).ceil() as usize).min(usable.len() - 1)
    } else {
        0
    };
    let validation: Vec<Vec<u32>> = order[..n_val].iter().map(|&i| usable[i].clone()).collect();
    let examples: Vec<(Vec<u32>, usize)> = order[n_val..]
        .iter()
        .flat_map(|&i| windows(usable[i], shape.context, static_block_len(usable[i], &vocab.static_ids)))
        .collect();

    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total = config.max_steps.unwrap_or(config.epochs * steps_per_epoch).max(1);
    let mut adam = AdamW::new(&layout);
    let mut report = TrainReport::default();
    let mut snapshots: Vec<(usize, f64, Vec<f32>)> = Vec::new();
    let mut batch_order: Vec<usize> = Vec::new();

    let make = |p: &[f32]| TransformerModel {
        layout: layout.clone(),
        fingerprint: vocab.fingerprint,
        static_ids: vocab.static_ids.clone(),
        params: p.to_vec(),
    };

    for step in 0..total {
        let pos = step % steps_per_epoch;
        if pos == 0 {
            batch_order = (0..examples.len()).collect();
            let epoch = (step / steps_per_epoch) as u64;
            batch_order.shuffle(&mut stream_rng(config.seed, &[SHUFFLE_STREAM, epoch]));
        }
        let batch = &batch_order[pos * config.batch_size..((pos + 1) * config.batch_size).min(examples.len())];
        let targets: usize = batch.iter().map(|&i| examples[i].0.len() - examples[i].1).sum();
        let scale = 1.0 / targets.max(1) as f32;
        let results: Vec<(f32, Vec<f32>)> = batch
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let (tokens, from) = &examples[i];
                let mut rng = stream_rng(config.seed, &[DROPOUT_STREAM, step as u64, k as u64]);
                let mut grad = vec![0.0f32; layout.total];
                let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut rng));
                let loss = transformer::loss_and_grad(&layout, &params, tokens, *from, scale, dropout, &mut grad, None);
                (loss, grad)
            })
            .collect();
        let mut grad = vec![0.0f32; layout.total];
        let mut loss = 0.0f64;
        for (l, g) in &results {
            loss += f64::from(*l);
            for (a, b) in grad.iter_mut().zip(g) {
                *a += *b;
            }
        }
        report.train_loss.push(loss / targets.max(1) as f64);

        if config.grad_clip > 0.0 {
            let norm = grad.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            if norm > config.grad_clip {
                let s = (config.grad_clip / norm) as f32;
                for x in grad.iter_mut() {
                    *x *= s;
                }
            }
        }
        adam.step(&mut params, &grad, lr_at(config, step, total), config.weight_decay);

        let last = step + 1 == total;
        if !validation.is_empty() && ((step + 1) % config.eval_every == 0 || last) {
            let val = nll(&GeneratorParams::Transformer(make(&params)), &validation)?;
            log::debug!("step {} train {:.4} val {:.4}", step + 1, report.train_loss[step], val);
            report.evaluations.push((step + 1, val));
            snapshots.push((step + 1, val, params.clone()));
            if snapshots.len() > config.selection_window {
                snapshots.remove(0);
            }
        }
    }

    let chosen = snapshots
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _, p)| (*s, p.clone()));
    let params = match chosen {
        Some((s, p)) => {
            report.selected_step = Some(s);
            p
        }
        None => {
            report.selected_step = Some(total);
            params
        }
    };
    Ok((GeneratorParams::Transformer(make(&params)), report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// `(coordinate, analytic, numeric, error)` for every checked entry.
    pub entries: Vec<(usize, f64, f64, f64)>,
}

/// Below this magnitude for both gradients, the absolute error is used.
const TINY_GRADIENT: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients of the mean NLL against central differences,
/// in 64-bit arithmetic, on `coords` random coordinates plus `extra`.
pub fn grad_check(
    model: &TransformerModel,
    batch: &[Vec<u32>],
    coords: usize,
    extra: &[usize],
    seed: u64,
) -> GradCheckReport {
    grad_check_inner(model, batch, coords, extra, seed, None)
}

pub(crate) fn grad_check_inner(
    model: &TransformerModel,
    batch: &[Vec<u32>],
    coords: usize,
    extra: &[usize],
    seed: u64,
    fault: Option<Fault>,
) -> GradCheckReport {
    let lay = &model.layout;
    let p64: Vec<f64> = model.params.iter().map(|&x| f64::from(x)).collect();
    let windows: Vec<(Vec<u32>, usize)> = batch
        .iter()
        .filter(|s| s.len() >= 2)
        .flat_map(|s| windows(s, lay.shape.context, static_block_len(s, &model.static_ids)))
        .collect();
    let targets: usize = windows.iter().map(|(w, f)| w.len() - f).sum();
    let scale = 1.0 / targets as f64;
    let loss = |p: &[f64]| -> f64 {
        let mut scratch = vec![0.0; p.len()];
        windows
            .iter()
            .map(|(w, f)| transformer::loss_and_grad(lay, p, w, *f, 0.0, None, &mut scratch, None))
            .sum::<f64>()
            * scale
    };
    let mut grad = vec![0.0; p64.len()];
    for (w, f) in &windows {
        transformer::loss_and_grad(lay, &p64, w, *f, scale, None, &mut grad, fault);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    let mut picks: Vec<usize> = (0..coords).map(|_| rng.random_range(0..p64.len())).collect();
    picks.extend_from_slice(extra);
    let mut entries = Vec::with_capacity(picks.len());
    let mut work = p64.clone();
    for &i in &picks {
        work[i] = p64[i] + FD_STEP;
        let up = loss(&work);
        work[i] = p64[i] - FD_STEP;
        let down = loss(&work);
        work[i] = p64[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs());
        let diff = (analytic - numeric).abs();
        let err = if denom < TINY_GRADIENT { diff } else { diff / denom };
        entries.push((i, analytic, numeric, err));
    }
    GradCheckReport {
        max_rel_error: entries.iter().map(|e| e.3).fold(0.0, f64::max),
        coordinates: entries.len(),
        entries,
    }
}
