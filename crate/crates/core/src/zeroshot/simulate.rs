use rayon::prelude::*;

use super::task::{ResolvedTask, Rule};
use super::InferenceError;
use crate::model::{sample_with, GeneratorParams};
use crate::rng::stream_rng;

/// How one simulated future ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// A positive token was sampled.
    Hit(u32),
    Class(usize),
    Value(f64),
    /// TIMELINE_END came before any task-relevant token.
    Ended,
    /// The horizon was reached first.
    Censored,
}

impl Outcome {
    /// Whether the trajectory produced a task answer.
    pub fn is_resolved(&self) -> bool {
        matches!(self, Outcome::Hit(_) | Outcome::Class(_) | Outcome::Value(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleKind {
    Binary,
    Multiclass(usize),
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub prefix: Vec<u32>,
    pub kind: BundleKind,
    /// New tokens of each trajectory.
    pub continuations: Vec<Vec<u32>>,
    pub outcomes: Vec<Outcome>,
}

impl TrajectoryBundle {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Share of trajectories without a task answer, TIMELINE_END included.
    pub fn censored_rate(&self) -> f64 {
        let open = self.outcomes.iter().filter(|o| !o.is_resolved()).count();
        open as f64 / self.outcomes.len() as f64
    }
}

/// Watches generated tokens for the task answer.
pub(super) struct Watcher<'a> {
    rule: &'a Rule,
    end: u32,
    /// Regression: quantile tokens seen since the last target event.
    in_target: Option<usize>,
    pub(super) outcome: Option<Outcome>,
}

impl Watcher<'_> {
    pub(super) fn push(&mut self, t: u32) -> bool {
        let found = match self.rule {
            Rule::Binary(pos) => pos.contains(&t).then_some(Outcome::Hit(t)),
            Rule::Multiclass { classes, .. } => classes.get(&t).map(|&c| Outcome::Class(c)),
            Rule::Regression { event, dimension, midpoints, quantiles } => {
                if t == *event {
                    self.in_target = Some(0);
                    None
                } else if let (Some(seen), Some(&q)) = (self.in_target, quantiles.get(&t)) {
                    if seen == *dimension {
                        Some(Outcome::Value(midpoints[q]))
                    } else {
                        self.in_target = Some(seen + 1);
                        None
                    }
                } else {
                    if !quantiles.contains_key(&t) {
                        self.in_target = None;
                    }
                    None
                }
            }
        };
        if found.is_some() {
            self.outcome = found;
            return true;
        }
        if t == self.end {
            self.outcome = Some(Outcome::Ended);
            return true;
        }
        false
    }
}


/// Samples `task.trajectories` continuations of `prefix`. Trajectory `n`
/// draws from its own stream `(seed, n)`.
pub fn simulate_fphts(
    params: &GeneratorParams,
    prefix: &[u32],
    task: &ResolvedTask,
    seed: u64,
) -> Result<TrajectoryBundle, InferenceError> {
    let kind = match &task.rule {
        Rule::Binary(_) => BundleKind::Binary,
        Rule::Multiclass { count, .. } => BundleKind::Multiclass(*count),
        Rule::Regression { .. } => BundleKind::Regression,
    };
    let runs: Vec<(Vec<u32>, Outcome)> = (0..task.task.trajectories as u64)
        .into_par_iter()
        .map(|n| {
            let mut rng = stream_rng(seed, &[n]);
            let mut w = Watcher { rule: &task.rule, end: task.end, in_target: None, outcome: None };
            let s = sample_with(params, prefix, task.task.temperature, task.task.horizon, &mut rng, |t| w.push(t))?;
            let outcome = w.outcome.unwrap_or(Outcome::Censored);
            Ok((s.tokens[prefix.len()..].to_vec(), outcome))
        })
        .collect::<Result<_, crate::model::ModelError>>()?;
    let (continuations, outcomes) = runs.into_iter().unzip();
    Ok(TrajectoryBundle { prefix: prefix.to_vec(), kind, continuations, outcomes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryEstimate {
    pub probability: f64,
    pub censored_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassEstimate {
    pub probabilities: Vec<f64>,
    pub censored_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionEstimate {
    pub value: f64,
    pub resolved: usize,
    pub censored_rate: f64,
}

/// `M/N`; unresolved trajectories count as negatives.
pub fn estimate_binary(bundle: &TrajectoryBundle) -> Result<BinaryEstimate, InferenceError> {
    if bundle.kind != BundleKind::Binary {
        return Err(InferenceError::KindMismatch);
    }
    let hits = bundle.outcomes.iter().filter(|o| matches!(o, Outcome::Hit(_))).count();
    Ok(BinaryEstimate {
        probability: hits as f64 / bundle.len() as f64,
        censored_rate: bundle.censored_rate(),
    })
}

/// `M_c / Σ M_c` over resolved trajectories.
pub fn estimate_multiclass(bundle: &TrajectoryBundle) -> Result<MulticlassEstimate, InferenceError> {
    let BundleKind::Multiclass(c) = bundle.kind else {
        return Err(InferenceError::KindMismatch);
    };
    let mut counts = vec![0usize; c];
    for o in &bundle.outcomes {
        if let Outcome::Class(k) = o {
            counts[*k] += 1;
        }
    }
    let resolved: usize = counts.iter().sum();
    if resolved == 0 {
        return Err(InferenceError::AllCensored);
    }
    Ok(MulticlassEstimate {
        probabilities: counts.iter().map(|&m| m as f64 / resolved as f64).collect(),
        censored_rate: (bundle.len() - resolved) as f64 / bundle.len() as f64,
    })
}

/// Mean decoded value over resolved trajectories.
pub fn estimate_regression(bundle: &TrajectoryBundle) -> Result<RegressionEstimate, InferenceError> {
    if bundle.kind != BundleKind::Regression {
        return Err(InferenceError::KindMismatch);
    }
    let values: Vec<f64> = bundle
        .outcomes
        .iter()
        .filter_map(|o| if let Outcome::Value(v) = o { Some(*v) } else { None })
        .collect();
    if values.is_empty() {
        return Err(InferenceError::AllCensored);
    }
    Ok(RegressionEstimate {
        value: values.iter().sum::<f64>() / values.len() as f64,
        resolved: values.len(),
        censored_rate: bundle.censored_rate(),
    })
}
