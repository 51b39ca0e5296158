use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PhtError;

/// Empirical-CDF discretization for one variable.
///
/// Only the `Q − 1` breakpoints are kept: `breakpoints[k − 1]` is the
/// smallest training value whose ECDF count reaches `⌈k·n/Q⌉`, so `q(v)` is
/// the number of breakpoints `≤ v`. This reproduces
/// `min(⌊F(v)·Q⌋, Q − 1)` with `F(v) = #{x ≤ v}/n` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableQuantiles {
    pub n: usize,
    pub breakpoints: Vec<f64>,
    /// Representative value per bin, used for regression decoding.
    pub midpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub q: usize,
    pub variables: BTreeMap<String, VariableQuantiles>,
}

impl QuantileSpec {
    pub fn quantile_token(&self, variable: &str, v: f64) -> Result<usize, PhtError> {
        let var = self
            .variables
            .get(variable)
            .ok_or_else(|| PhtError::UnknownVariable(variable.to_string()))?;
        if !v.is_finite() {
            return Err(PhtError::NonFiniteValue(variable.to_string()));
        }
        Ok(var.breakpoints.partition_point(|b| *b <= v))
    }

    pub fn midpoint(&self, variable: &str, q: usize) -> Result<f64, PhtError> {
        let var = self
            .variables
            .get(variable)
            .ok_or_else(|| PhtError::UnknownVariable(variable.to_string()))?;
        var.midpoints.get(q).copied().ok_or_else(|| PhtError::MalformedSequence {
            position: q,
            reason: format!("quantile index {q} out of range for `{variable}`"),
        })
    }

    pub fn contains(&self, variable: &str) -> bool {
        self.variables.contains_key(variable)
    }
}

/// Fits per-variable quantile breakpoints. Non-finite observations are
/// dropped before fitting.
pub fn fit_quantiles(
    values: &BTreeMap<String, Vec<f64>>,
    q: usize,
) -> Result<QuantileSpec, PhtError> {
    if q < 2 {
        return Err(PhtError::InvalidQuantileCount(q));
    }
    let mut variables = BTreeMap::new();
    for (name, raw) in values {
        let mut sorted: Vec<f64> = raw.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return Err(PhtError::EmptyVariable(name.clone()));
        }
        sorted.sort_by(f64::total_cmp);
        variables.insert(name.clone(), fit_one(&sorted, q));
    }
    Ok(QuantileSpec { q, variables })
}

fn fit_one(sorted: &[f64], q: usize) -> VariableQuantiles {
    let n = sorted.len();
    let breakpoints: Vec<f64> = (1..q).map(|k| sorted[(k * n).div_ceil(q) - 1]).collect();

    let mut lo = vec![f64::INFINITY; q];
    let mut hi = vec![f64::NEG_INFINITY; q];
    for &v in sorted {
        let b = breakpoints.partition_point(|x| *x <= v);
        lo[b] = lo[b].min(v);
        hi[b] = hi[b].max(v);
    }
    // Heavy ties can leave a bin without training values; fall back to its
    // lower breakpoint.
    let midpoints = (0..q)
        .map(|b| {
            if lo[b].is_finite() {
                0.5 * (lo[b] + hi[b])
            } else if b == 0 {
                sorted[0]
            } else {
                breakpoints[b - 1]
            }
        })
        .collect();
    VariableQuantiles { n, breakpoints, midpoints }
}
