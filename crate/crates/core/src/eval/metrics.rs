use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::stream_rng;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub higher_is_better: bool,
}

impl MetricResult {
    /// Percentile interval from bootstrap replicates, widened if needed so it
    /// contains the point value.
    fn from_replicates(name: &str, value: f64, mut reps: Vec<f64>, higher_is_better: bool) -> Self {
        reps.retain(|x| x.is_finite());
        reps.sort_by(f64::total_cmp);
        let (lo, hi) = if reps.is_empty() {
            (value, value)
        } else {
            (percentile(&reps, 0.025), percentile(&reps, 0.975))
        };
        Self { name: name.into(), value, ci_low: lo.min(value), ci_high: hi.max(value), higher_is_better }
    }
}

/// Linear interpolation between order statistics of sorted `xs`.
fn percentile(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < xs.len() {
        xs[i] + frac * (xs[i + 1] - xs[i])
    } else {
        xs[i]
    }
}

fn resample(n: usize, rng: &mut impl Rng) -> impl Iterator<Item = usize> + '_ {
    (0..n).map(move |_| rng.random_range(0..n))
}

/// Mann–Whitney AUC with ties counted one half.
pub fn auc_value(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::InvalidInput("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of (negatives below + half the tied negatives),
    // accumulated in half units so the count stays an exact integer.
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let pos = idx[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        let neg = (j - i) as u64 - pos;
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// AUC with a stratified percentile bootstrap interval.
pub fn auc(scores: &[f64], labels: &[bool], seed: u64) -> Result<MetricResult, EvalError> {
    let value = auc_value(scores, labels)?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, &[b]);
            let mut s = Vec::with_capacity(labels.len());
            let mut l = Vec::with_capacity(labels.len());
            for group in [&pos, &neg] {
                let picks: Vec<usize> = resample(group.len(), &mut rng).collect();
                for k in picks {
                    s.push(scores[group[k]]);
                    l.push(labels[group[k]]);
                }
            }
            auc_value(&s, &l).expect("both strata are non-empty")
        })
        .collect();
    Ok(MetricResult::from_replicates("auc", value, reps, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_prob: Option<f64>,
    pub event_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub brier: f64,
    pub bins: Vec<CalibrationBin>,
}

fn brier_value(probs: &[f64], labels: &[bool]) -> f64 {
    probs.iter().zip(labels).map(|(p, &y)| (p - f64::from(u8::from(y))).powi(2)).sum::<f64>() / probs.len() as f64
}

fn check_probs(probs: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(EvalError::InvalidInput("probabilities and labels must be non-empty and aligned".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Brier score plus equal-width reliability bins on `[0, 1]`; `p = 1` falls
/// in the last bin.
pub fn brier_and_calibration(probs: &[f64], labels: &[bool], bins: usize) -> Result<Calibration, EvalError> {
    check_probs(probs, labels)?;
    if bins == 0 {
        return Err(EvalError::InvalidInput("need at least one calibration bin".into()));
    }
    let mut sum_p = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (p, &y) in probs.iter().zip(labels) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        sum_p[b] += p;
        sum_y[b] += f64::from(u8::from(y));
        count[b] += 1;
    }
    let bins = (0..bins)
        .map(|b| CalibrationBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: count[b],
            mean_prob: (count[b] > 0).then(|| sum_p[b] / count[b] as f64),
            event_rate: (count[b] > 0).then(|| sum_y[b] / count[b] as f64),
        })
        .collect();
    Ok(Calibration { brier: brier_value(probs, labels), bins })
}

/// Brier score with a bootstrap interval; lower is better.
pub fn brier(probs: &[f64], labels: &[bool], seed: u64) -> Result<MetricResult, EvalError> {
    check_probs(probs, labels)?;
    let value = brier_value(probs, labels);
    let n = probs.len();
    let reps = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, &[b]);
            let idx: Vec<usize> = resample(n, &mut rng).collect();
            let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            brier_value(&p, &y)
        })
        .collect();
    Ok(MetricResult::from_replicates("brier", value, reps, false))
}

fn accuracy_value(preds: &[usize], labels: &[usize]) -> f64 {
    preds.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / preds.len() as f64
}

pub fn accuracy(preds: &[usize], labels: &[usize], seed: u64) -> Result<MetricResult, EvalError> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(EvalError::InvalidInput("predictions and labels must be non-empty and aligned".into()));
    }
    let value = accuracy_value(preds, labels);
    let n = preds.len();
    let reps = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, &[b]);
            let idx: Vec<usize> = resample(n, &mut rng).collect();
            let p: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            accuracy_value(&p, &y)
        })
        .collect();
    Ok(MetricResult::from_replicates("accuracy", value, reps, true))
}

fn r2_value(preds: &[f64], truths: &[f64]) -> Option<f64> {
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let sst: f64 = truths.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return None;
    }
    let sse: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum();
    Some(1.0 - sse / sst)
}

/// Coefficient of determination; resamples with constant truths are dropped
/// from the interval.
pub fn r2_regression(preds: &[f64], truths: &[f64], seed: u64) -> Result<MetricResult, EvalError> {
    if preds.is_empty() || preds.len() != truths.len() {
        return Err(EvalError::InvalidInput("predictions and truths must be non-empty and aligned".into()));
    }
    let value = r2_value(preds, truths).ok_or(EvalError::ConstantTruth)?;
    let n = preds.len();
    let reps = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, &[b]);
            let idx: Vec<usize> = resample(n, &mut rng).collect();
            let p: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
            let t: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
            r2_value(&p, &t).unwrap_or(f64::NAN)
        })
        .collect();
    Ok(MetricResult::from_replicates("r2", value, reps, true))
}
