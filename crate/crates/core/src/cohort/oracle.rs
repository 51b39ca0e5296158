use super::process::GroundTruthProcess;
use super::sample::{walk_from, LABEL_STREAM};
use super::CohortError;
use crate::pht::{fnv1a64, ClinicalEvent};
use crate::rng::stream_rng;

/// Probability that a walk from `from` visits a `targets` state within
/// `max_steps` transitions. Step 0 (the starting state) does not count.
pub fn exact_event_probability(
    process: &GroundTruthProcess,
    from: &str,
    targets: &[&str],
    max_steps: usize,
) -> Result<f64, CohortError> {
    let from = process.state_index(from)?;
    let mut is_target = vec![false; process.len()];
    for t in targets {
        is_target[process.state_index(t)?] = true;
    }
    Ok(hit_probability(process, from, &is_target, max_steps))
}

pub(crate) fn hit_probability(
    process: &GroundTruthProcess,
    from: usize,
    is_target: &[bool],
    max_steps: usize,
) -> f64 {
    let p = process.matrix();
    let n = process.len();
    // v[s] = P(hit within k steps | start at s), built up from k = 0.
    let mut v = vec![0.0; n];
    for _ in 0..max_steps {
        v = (0..n)
            .map(|s| (0..n).map(|t| p[s][t] * if is_target[t] { 1.0 } else { v[t] }).sum())
            .collect();
    }
    v[from]
}

/// Absorption probabilities into disjoint state classes plus censored mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub probs: Vec<f64>,
    pub censored: f64,
}

/// First-passage class distribution: entering any state of class `c`
/// within `max_steps` transitions resolves the walk to `c`.
pub fn exact_class_distribution(
    process: &GroundTruthProcess,
    from: &str,
    classes: &[Vec<&str>],
    max_steps: usize,
) -> Result<ClassDistribution, CohortError> {
    let from = process.state_index(from)?;
    let n = process.len();
    let mut class_of: Vec<Option<usize>> = vec![None; n];
    for (c, states) in classes.iter().enumerate() {
        for s in states {
            let i = process.state_index(s)?;
            if class_of[i].is_some_and(|o| o != c) {
                return Err(CohortError::OverlappingClasses(s.to_string()));
            }
            class_of[i] = Some(c);
        }
    }
    let k = classes.len();
    let p = process.matrix();
    let mut u = vec![vec![0.0; k]; n];
    for _ in 0..max_steps {
        u = (0..n)
            .map(|s| {
                let mut row = vec![0.0; k];
                for t in 0..n {
                    if p[s][t] == 0.0 {
                        continue;
                    }
                    match class_of[t] {
                        Some(c) => row[c] += p[s][t],
                        None => {
                            for c in 0..k {
                                row[c] += p[s][t] * u[t][c];
                            }
                        }
                    }
                }
                row
            })
            .collect();
    }
    let probs = u[from].clone();
    let censored = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    Ok(ClassDistribution { probs, censored })
}

/// Ground-truth labels from fresh continuation walks.
///
/// A label for (patient, anchor state) is read off an independent walk that
/// restarts in the anchor state, so it follows the true conditional law of
/// the future given the state even when the anchor is the patient's last
/// one.
#[derive(Debug, Clone, Copy)]
pub struct TruthOracle<'a> {
    pub process: &'a GroundTruthProcess,
    pub seed: u64,
}

impl<'a> TruthOracle<'a> {
    pub fn new(process: &'a GroundTruthProcess, seed: u64) -> Self {
        Self { process, seed }
    }

    /// Events following `state` for this patient, at most `window` of them.
    pub fn continuation(
        &self,
        patient_id: &str,
        state: usize,
        window: Option<usize>,
    ) -> Result<Vec<ClinicalEvent>, CohortError> {
        let key = fnv1a64(patient_id.as_bytes());
        let mut rng = stream_rng(self.seed, &[LABEL_STREAM, key]);
        let mut events: Vec<ClinicalEvent> =
            walk_from(self.process, state, 0.0, &mut rng, key)?.into_iter().map(|(_, e)| e).collect();
        if let Some(w) = window {
            events.truncate(w);
        }
        Ok(events)
    }

    pub fn binary(
        &self,
        patient_id: &str,
        state: usize,
        positive: &[String],
        window: Option<usize>,
    ) -> Result<bool, CohortError> {
        Ok(self
            .continuation(patient_id, state, window)?
            .iter()
            .any(|e| positive.contains(&e.name)))
    }

    /// First class whose event set contains a continuation event.
    pub fn class(
        &self,
        patient_id: &str,
        state: usize,
        classes: &[Vec<String>],
        window: Option<usize>,
    ) -> Result<Option<usize>, CohortError> {
        Ok(self
            .continuation(patient_id, state, window)?
            .iter()
            .find_map(|e| classes.iter().position(|c| c.contains(&e.name))))
    }

    /// Value of dimension `dim` at the first `event` in the continuation.
    pub fn value(
        &self,
        patient_id: &str,
        state: usize,
        event: &str,
        dim: usize,
        window: Option<usize>,
    ) -> Result<Option<f64>, CohortError> {
        Ok(self
            .continuation(patient_id, state, window)?
            .iter()
            .find(|e| e.name == event)
            .and_then(|e| e.payload.scalars().get(dim).map(|(_, v)| *v)))
    }
}
