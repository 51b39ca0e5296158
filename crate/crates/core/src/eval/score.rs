use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::MetricResult;
use super::EvalError;

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.96;
/// Floor on a metric's standard error, guarding against infinite weights.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    /// Every metric the method reported, in input order.
    pub metrics: Vec<MetricResult>,
    /// Aligned with [`ScoreReport::included`].
    pub normalized: Vec<f64>,
    pub weights: Vec<f64>,
    pub score: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub included: Vec<String>,
    /// `(metric, reason)` for metrics left out of the score.
    pub excluded: Vec<(String, String)>,
    pub methods: Vec<MethodScore>,
}

/// Inverse-variance weighted sum of min–max normalized metrics.
///
/// For each metric: half-width `h = (high − low)/2`, `σ = h/1.96`; values are
/// sign-flipped when lower is better and min–max normalized across methods,
/// so `Var(m̂) = σ²/range²`. Per method, `w ∝ 1/Var(m̂)`,
/// `S = Σ w·m̂`, `Var(S) = 1/Σ(1/Var(m̂))` and the interval is
/// `S ± 1.96·√Var(S)`. Metrics with zero range across methods are excluded.
pub fn overall_score(methods: &[(String, Vec<MetricResult>)]) -> Result<ScoreReport, EvalError> {
    if methods.len() < 2 {
        return Err(EvalError::InvalidInput("overall score needs at least two methods".into()));
    }
    let names: Vec<String> = methods[0].1.iter().map(|m| m.name.clone()).collect();
    let unique: BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(EvalError::InvalidInput(format!("method `{}` repeats a metric", methods[0].0)));
    }
    let mut seen_methods = BTreeSet::new();
    for (method, metrics) in methods {
        if !seen_methods.insert(method) {
            return Err(EvalError::InvalidInput(format!("duplicate method `{method}`")));
        }
        let mine: BTreeSet<&String> = metrics.iter().map(|m| &m.name).collect();
        if mine != unique || metrics.len() != names.len() {
            return Err(EvalError::MissingMetric { method: method.clone() });
        }
        for m in metrics {
            if !(m.value.is_finite() && m.ci_low.is_finite() && m.ci_high.is_finite()) || m.ci_low > m.ci_high {
                return Err(EvalError::InvalidInput(format!("`{method}` / `{}`: bad interval", m.name)));
            }
        }
    }
    let lookup = |i: usize, name: &str| methods[i].1.iter().find(|m| m.name == name).expect("checked above");

    let mut included = Vec::new();
    let mut excluded = Vec::new();
    // Per included metric: (oriented values, σ per method, min, range).
    let mut columns: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = Vec::new();
    for name in &names {
        let higher = lookup(0, name).higher_is_better;
        if (0..methods.len()).any(|i| lookup(i, name).higher_is_better != higher) {
            return Err(EvalError::InvalidInput(format!("metric `{name}` changes direction across methods")));
        }
        let sign = if higher { 1.0 } else { -1.0 };
        let values: Vec<f64> = (0..methods.len()).map(|i| sign * lookup(i, name).value).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range == 0.0 {
            excluded.push((name.clone(), "identical value for every method".to_string()));
            continue;
        }
        let sigmas: Vec<f64> = (0..methods.len())
            .map(|i| {
                let m = lookup(i, name);
                let s = (m.ci_high - m.ci_low) / 2.0 / Z95;
                if s < SIGMA_FLOOR {
                    log::warn!("`{}` / `{name}` has a zero-width interval; flooring its standard error", methods[i].0);
                    SIGMA_FLOOR
                } else {
                    s
                }
            })
            .collect();
        included.push(name.clone());
        columns.push((values, sigmas, lo, range));
    }
    if included.is_empty() {
        return Err(EvalError::NoScorableMetric);
    }

    let scores = methods
        .iter()
        .enumerate()
        .map(|(i, (method, metrics))| {
            let normalized: Vec<f64> = columns.iter().map(|(v, _, lo, range)| (v[i] - lo) / range).collect();
            let variances: Vec<f64> = columns.iter().map(|(_, s, _, range)| (s[i] / range).powi(2)).collect();
            let precision: f64 = variances.iter().map(|v| 1.0 / v).sum();
            let weights: Vec<f64> = variances.iter().map(|v| (1.0 / v) / precision).collect();
            let score: f64 = weights.iter().zip(&normalized).map(|(w, m)| w * m).sum();
            let variance = 1.0 / precision;
            let half = Z95 * variance.sqrt();
            MethodScore {
                method: method.clone(),
                metrics: metrics.clone(),
                normalized,
                weights,
                score,
                variance,
                ci_low: score - half,
                ci_high: score + half,
            }
        })
        .collect();
    Ok(ScoreReport { included, excluded, methods: scores })
}
