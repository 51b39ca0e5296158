use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::CohortError;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionSpec {
    None,
    Normal { means: Vec<f64>, sds: Vec<f64> },
    /// Uniform over `codes` unless `weights` is given.
    Categorical {
        codes: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub to: String,
    pub p: f64,
    /// Log-normal gap parameters in log-seconds.
    pub gap_mu: f64,
    pub gap_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub name: String,
    pub event: String,
    #[serde(default)]
    pub terminal: bool,
    pub payload: EmissionSpec,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub name: String,
    pub start: String,
    pub seed: u64,
    pub static_priors: BTreeMap<String, BTreeMap<String, f64>>,
    pub states: Vec<StateSpec>,
}

/// Validated process. Terminal states are absorbing in the transition
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthProcess {
    spec: ProcessSpec,
    index: BTreeMap<String, usize>,
    matrix: Vec<Vec<f64>>,
    start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessDiagnostics {
    pub states: usize,
    pub terminals: Vec<String>,
    pub event_names: Vec<String>,
    /// Expected number of transitions from each state until absorption.
    pub expected_steps: Vec<(String, f64)>,
}

impl GroundTruthProcess {
    pub fn new(spec: ProcessSpec) -> Result<Self, CohortError> {
        let mut index = BTreeMap::new();
        for (i, s) in spec.states.iter().enumerate() {
            if index.insert(s.name.clone(), i).is_some() {
                return Err(CohortError::DuplicateState(s.name.clone()));
            }
        }
        let start = *index
            .get(&spec.start)
            .ok_or_else(|| CohortError::UnknownState(spec.start.clone()))?;
        let n = spec.states.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for (i, s) in spec.states.iter().enumerate() {
            validate_emission(s)?;
            if s.terminal {
                if s.transitions.iter().any(|t| t.to != s.name) {
                    return Err(CohortError::InvalidTransition {
                        from: s.name.clone(),
                        to: s.transitions[0].to.clone(),
                        reason: "terminal states only loop to themselves".into(),
                    });
                }
                matrix[i][i] = 1.0;
                continue;
            }
            let mut sum = 0.0;
            for t in &s.transitions {
                let bad = |reason: &str| CohortError::InvalidTransition {
                    from: s.name.clone(),
                    to: t.to.clone(),
                    reason: reason.into(),
                };
                let j = *index.get(&t.to).ok_or_else(|| CohortError::UnknownState(t.to.clone()))?;
                if !(t.p >= 0.0 && t.p <= 1.0) {
                    return Err(bad("probability outside [0, 1]"));
                }
                if !(t.gap_sigma > 0.0 && t.gap_sigma.is_finite()) {
                    return Err(bad("gap sigma must be positive"));
                }
                if !t.gap_mu.is_finite() {
                    return Err(bad("gap mu must be finite"));
                }
                if matrix[i][j] != 0.0 {
                    return Err(bad("duplicate transition"));
                }
                matrix[i][j] = t.p;
                sum += t.p;
            }
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(CohortError::RowSum { state: s.name.clone(), sum });
            }
        }
        for (attr, dist) in &spec.static_priors {
            let bad = |reason: &str| CohortError::InvalidPrior {
                attribute: attr.clone(),
                reason: reason.into(),
            };
            if dist.is_empty() {
                return Err(bad("no values"));
            }
            if dist.values().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
                return Err(bad("probability outside [0, 1]"));
            }
            let sum: f64 = dist.values().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(bad(&format!("probabilities sum to {sum}")));
            }
        }
        let process = Self { spec, index, matrix, start };
        process.check_reachability()?;
        Ok(process)
    }

    pub fn from_toml(text: &str) -> Result<Self, CohortError> {
        let spec: ProcessSpec = toml::from_str(text).map_err(|e| CohortError::Parse(e.to_string()))?;
        Self::new(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.spec).expect("process spec serializes")
    }

    fn check_reachability(&self) -> Result<(), CohortError> {
        let n = self.matrix.len();
        let mut ok = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.is_terminal(i)).collect();
        for &i in &queue {
            ok[i] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !ok[i] && self.matrix[i][j] > 0.0 {
                    ok[i] = true;
                    queue.push_back(i);
                }
            }
        }
        match ok.iter().position(|r| !r) {
            Some(i) => Err(CohortError::Unreachable(self.spec.states[i].name.clone())),
            None => Ok(()),
        }
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn state(&self, i: usize) -> &StateSpec {
        &self.spec.states[i]
    }

    pub fn state_index(&self, name: &str) -> Result<usize, CohortError> {
        self.index.get(name).copied().ok_or_else(|| CohortError::UnknownState(name.to_string()))
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.spec.states[i].terminal
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// States whose emitted event name is in `events`.
    pub fn states_emitting<S: AsRef<str>>(&self, events: &[S]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| events.iter().any(|e| e.as_ref() == self.spec.states[i].event))
            .collect()
    }

    pub fn diagnostics(&self) -> ProcessDiagnostics {
        let n = self.len();
        // Value iteration on E[steps]; converges because every state reaches
        // a terminal.
        let mut e = vec![0.0; n];
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            let next: Vec<f64> = (0..n)
                .map(|i| {
                    if self.is_terminal(i) {
                        return 0.0;
                    }
                    1.0 + (0..n).map(|j| self.matrix[i][j] * e[j]).sum::<f64>()
                })
                .collect();
            for i in 0..n {
                delta = delta.max((next[i] - e[i]).abs());
            }
            e = next;
            if delta < 1e-12 {
                break;
            }
        }
        let mut event_names: Vec<String> = self.spec.states.iter().map(|s| s.event.clone()).collect();
        event_names.sort();
        event_names.dedup();
        ProcessDiagnostics {
            states: n,
            terminals: (0..n).filter(|&i| self.is_terminal(i)).map(|i| self.state(i).name.clone()).collect(),
            event_names,
            expected_steps: (0..n).map(|i| (self.state(i).name.clone(), e[i])).collect(),
        }
    }
}

fn validate_emission(s: &StateSpec) -> Result<(), CohortError> {
    let bad = |reason: &str| {
        Err(CohortError::InvalidEmission { state: s.name.clone(), reason: reason.into() })
    };
    if s.event.is_empty() {
        return bad("empty event name");
    }
    match &s.payload {
        EmissionSpec::None => Ok(()),
        EmissionSpec::Normal { means, sds } => {
            if means.is_empty() || means.len() != sds.len() {
                return bad("means and sds must be non-empty and of equal length");
            }
            if means.iter().any(|m| !m.is_finite()) || sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad("means must be finite and sds positive");
            }
            Ok(())
        }
        EmissionSpec::Categorical { codes, weights } => {
            if codes.is_empty() || codes.iter().any(String::is_empty) {
                return bad("codes must be non-empty");
            }
            if let Some(w) = weights {
                if w.len() != codes.len() || w.iter().any(|x| !(*x >= 0.0)) {
                    return bad("weights must be non-negative and match codes");
                }
                if (w.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
                    return bad("weights must sum to 1");
                }
            }
            Ok(())
        }
    }
}
