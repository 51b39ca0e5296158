use std::io::{Read, Write};

use rayon::prelude::*;

use super::simulate::{estimate_binary, estimate_multiclass, estimate_regression, simulate_fphts};
use super::task::{InferenceTask, ResolvedTask, Rule, TaskKind};
use super::InferenceError;
use crate::cohort::TruthOracle;
use crate::model::GeneratorParams;
use crate::pht::{fnv1a64, Pht, TokenClass, Vocabulary};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Binary(bool),
    Class(usize),
    Value(f64),
}

/// Ground-truth outcome source for task instances.
pub trait LabelOracle: Sync {
    /// Label for the patient at `index` whose prefix ends in event
    /// `event_index`; `None` when the outcome is undefined for this patient.
    fn label(
        &self,
        index: usize,
        pht: &Pht,
        event_index: usize,
        task: &InferenceTask,
    ) -> Result<Option<Label>, InferenceError>;
}

/// Labels from the simulator's hidden states. Task token surfaces are read
/// as event names.
pub struct CohortLabels<'a> {
    pub oracle: TruthOracle<'a>,
    /// Hidden state per event, aligned with the PHTs.
    pub paths: &'a [Vec<usize>],
}

impl LabelOracle for CohortLabels<'_> {
    fn label(
        &self,
        index: usize,
        pht: &Pht,
        event_index: usize,
        task: &InferenceTask,
    ) -> Result<Option<Label>, InferenceError> {
        let state = *self
            .paths
            .get(index)
            .and_then(|p| p.get(event_index))
            .ok_or_else(|| InferenceError::InvalidTask(format!("no hidden state for {}", pht.patient_id)))?;
        let pid = &pht.patient_id;
        let w = task.label_window;
        Ok(match &task.kind {
            TaskKind::Binary { positive } => Some(Label::Binary(self.oracle.binary(pid, state, positive, w)?)),
            TaskKind::Multiclass { classes } => self.oracle.class(pid, state, classes, w)?.map(Label::Class),
            TaskKind::Regression { event, dimension } => {
                self.oracle.value(pid, state, event, *dimension, w)?.map(Label::Value)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub patient_id: String,
    pub prefix: Vec<u32>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstances {
    pub instances: Vec<TaskInstance>,
    /// Patients whose timeline lacks the anchor.
    pub without_anchor: usize,
    /// Patients whose label is undefined.
    pub unlabeled: usize,
}

/// Prefix through the last anchor occurrence and the index of the event it
/// belongs to.
pub fn cut_at_anchor(tokens: &[u32], anchor: u32, vocab: &Vocabulary) -> Option<(Vec<u32>, usize)> {
    let pos = tokens.iter().rposition(|&t| t == anchor)?;
    let events = tokens[..=pos].iter().filter(|&&t| vocab.class(t) == Some(TokenClass::EventName)).count();
    let event_index = events.checked_sub(1)?;
    Some((tokens[..=pos].to_vec(), event_index))
}

pub fn build_task_instances(
    phts: &[Pht],
    vocab: &Vocabulary,
    task: &ResolvedTask,
    oracle: &impl LabelOracle,
) -> Result<TaskInstances, InferenceError> {
    let rows: Vec<Option<Option<TaskInstance>>> = phts
        .par_iter()
        .enumerate()
        .map(|(i, pht)| {
            let Some((prefix, event_index)) = cut_at_anchor(&pht.tokens, task.anchor, vocab) else {
                return Ok(None);
            };
            let label = oracle.label(i, pht, event_index, &task.task)?;
            Ok(Some(label.map(|label| TaskInstance { patient_id: pht.patient_id.clone(), prefix, label })))
        })
        .collect::<Result<_, InferenceError>>()?;
    let without_anchor = rows.iter().filter(|r| r.is_none()).count();
    let unlabeled = rows.iter().filter(|r| matches!(r, Some(None))).count();
    let instances: Vec<TaskInstance> = rows.into_iter().flatten().flatten().collect();
    if instances.is_empty() {
        return Err(InferenceError::NoInstances { without_anchor, unlabeled });
    }
    Ok(TaskInstances { instances, without_anchor, unlabeled })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Binary(f64),
    /// `None` when every trajectory was censored.
    Multiclass(Option<Vec<f64>>),
    Regression(Option<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRow {
    pub patient_id: String,
    pub estimate: Estimate,
    pub censored_rate: f64,
    pub label: Option<Label>,
}

/// Zero-shot estimates for every instance. Instance seeds derive from the
/// patient id.
pub fn run_inference(
    params: &GeneratorParams,
    instances: &[TaskInstance],
    task: &ResolvedTask,
    seed: u64,
) -> Result<Vec<InferenceRow>, InferenceError> {
    instances
        .par_iter()
        .map(|inst| {
            let s = derive_seed(seed, &[fnv1a64(inst.patient_id.as_bytes())]);
            let bundle = simulate_fphts(params, &inst.prefix, task, s)?;
            let (estimate, censored_rate) = match &task.rule {
                Rule::Binary(_) => {
                    let e = estimate_binary(&bundle)?;
                    (Estimate::Binary(e.probability), e.censored_rate)
                }
                Rule::Multiclass { .. } => match estimate_multiclass(&bundle) {
                    Ok(e) => (Estimate::Multiclass(Some(e.probabilities)), e.censored_rate),
                    Err(InferenceError::AllCensored) => (Estimate::Multiclass(None), 1.0),
                    Err(e) => return Err(e),
                },
                Rule::Regression { .. } => match estimate_regression(&bundle) {
                    Ok(e) => (Estimate::Regression(Some(e.value)), e.censored_rate),
                    Err(InferenceError::AllCensored) => (Estimate::Regression(None), 1.0),
                    Err(e) => return Err(e),
                },
            };
            Ok(InferenceRow { patient_id: inst.patient_id.clone(), estimate, censored_rate, label: Some(inst.label) })
        })
        .collect()
}

fn csv_err(e: impl std::fmt::Display) -> InferenceError {
    InferenceError::Csv(e.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `patient_id, estimate(s), censored_rate, label`. The estimate
/// columns are `estimate` (binary), `value` (regression) or `p_0..p_{C-1}`
/// (multiclass).
pub fn write_inference_csv(
    w: impl Write,
    kind: &TaskKind,
    rows: &[InferenceRow],
) -> Result<(), InferenceError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["patient_id".to_string()];
    match kind {
        TaskKind::Binary { .. } => header.push("estimate".into()),
        TaskKind::Regression { .. } => header.push("value".into()),
        TaskKind::Multiclass { classes } => header.extend((0..classes.len()).map(|c| format!("p_{c}"))),
    }
    header.extend(["censored_rate".to_string(), "label".to_string()]);
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.patient_id.clone()];
        match (&r.estimate, kind) {
            (Estimate::Binary(p), _) => rec.push(p.to_string()),
            (Estimate::Regression(v), _) => rec.push(fmt_opt(*v)),
            (Estimate::Multiclass(Some(p)), _) => rec.extend(p.iter().map(f64::to_string)),
            (Estimate::Multiclass(None), TaskKind::Multiclass { classes }) => {
                rec.extend(std::iter::repeat_n(String::new(), classes.len()))
            }
            (Estimate::Multiclass(None), _) => return Err(InferenceError::KindMismatch),
        }
        rec.push(r.censored_rate.to_string());
        rec.push(match r.label {
            None => String::new(),
            Some(Label::Binary(b)) => u8::from(b).to_string(),
            Some(Label::Class(c)) => c.to_string(),
            Some(Label::Value(v)) => v.to_string(),
        });
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| InferenceError::Csv(e.to_string()))
}

/// Kind of an estimates file as recovered from its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Binary,
    Multiclass(usize),
    Regression,
}

pub fn read_inference_csv(r: impl Read) -> Result<(CsvKind, Vec<InferenceRow>), InferenceError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let n = header.len();
    if n < 4 || header[0] != "patient_id" || header[n - 2] != "censored_rate" || header[n - 1] != "label" {
        return Err(InferenceError::Csv(format!("unexpected header {header:?}")));
    }
    let kind = match header[1].as_str() {
        "estimate" if n == 4 => CsvKind::Binary,
        "value" if n == 4 => CsvKind::Regression,
        _ => {
            let c = n - 3;
            if (0..c).any(|i| header[1 + i] != format!("p_{i}")) {
                return Err(InferenceError::Csv(format!("unexpected header {header:?}")));
            }
            CsvKind::Multiclass(c)
        }
    };
    let num = |s: &str| -> Result<Option<f64>, InferenceError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| InferenceError::Csv(format!("bad number `{s}`")))
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f: Vec<&str> = rec.iter().collect();
        let estimate = match kind {
            CsvKind::Binary => {
                Estimate::Binary(num(f[1])?.ok_or_else(|| InferenceError::Csv("missing estimate".into()))?)
            }
            CsvKind::Regression => Estimate::Regression(num(f[1])?),
            CsvKind::Multiclass(c) => {
                let p: Vec<Option<f64>> = f[1..1 + c].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
                Estimate::Multiclass(p.into_iter().collect())
            }
        };
        let censored_rate = num(f[n - 2])?.ok_or_else(|| InferenceError::Csv("missing censored_rate".into()))?;
        let raw = f[n - 1];
        let label = if raw.is_empty() {
            None
        } else {
            Some(match kind {
                CsvKind::Binary => match raw {
                    "0" => Label::Binary(false),
                    "1" => Label::Binary(true),
                    _ => return Err(InferenceError::Csv(format!("bad binary label `{raw}`"))),
                },
                CsvKind::Multiclass(_) => {
                    Label::Class(raw.parse().map_err(|_| InferenceError::Csv(format!("bad class `{raw}`")))?)
                }
                CsvKind::Regression => Label::Value(num(raw)?.unwrap_or(f64::NAN)),
            })
        };
        rows.push(InferenceRow { patient_id: f[0].to_string(), estimate, censored_rate, label });
    }
    Ok((kind, rows))
}
