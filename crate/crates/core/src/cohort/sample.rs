use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::{EmissionSpec, GroundTruthProcess};
use super::CohortError;
use crate::pht::{ClinicalEvent, Payload, RawTimeline};
use crate::rng::stream_rng;

pub(crate) const MAX_WALK_STEPS: usize = 100_000;

/// Stream ids under the cohort seed.
pub(crate) const PATIENT_STREAM: u64 = 0;
pub(crate) const LABEL_STREAM: u64 = 1;

/// Sampled timelines plus the hidden state visited at each event.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCohort {
    pub timelines: Vec<RawTimeline>,
    pub paths: Vec<Vec<usize>>,
}

impl SampledCohort {
    pub fn len(&self) -> usize {
        self.timelines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timelines.is_empty()
    }
}

pub fn patient_id(index: u64) -> String {
    format!("P{index:07}")
}

/// Samples `count` patients. Patient `i` depends only on `(seed, i)`.
pub fn sample_cohort(
    process: &GroundTruthProcess,
    count: usize,
    seed: u64,
) -> Result<SampledCohort, CohortError> {
    if count == 0 {
        return Err(CohortError::EmptyCohort);
    }
    let results: Vec<(RawTimeline, Vec<usize>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| sample_patient(process, seed, i))
        .collect::<Result<_, _>>()?;
    let (timelines, paths) = results.into_iter().unzip();
    Ok(SampledCohort { timelines, paths })
}

pub fn sample_patient(
    process: &GroundTruthProcess,
    seed: u64,
    index: u64,
) -> Result<(RawTimeline, Vec<usize>), CohortError> {
    let mut rng = stream_rng(seed, &[PATIENT_STREAM, index]);
    let mut statics = BTreeMap::new();
    for (attr, dist) in &process.spec().static_priors {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = dist.keys().next_back().expect("non-empty prior");
        for (value, p) in dist {
            acc += p;
            if u < acc {
                chosen = value;
                break;
            }
        }
        statics.insert(attr.clone(), chosen.clone());
    }
    let start = process.start();
    let mut events = vec![emit(process, start, 0.0, &mut rng)];
    let mut path = vec![start];
    let continuation = walk_from(process, start, 0.0, &mut rng, index)?;
    for (s, e) in continuation {
        path.push(s);
        events.push(e);
    }
    Ok((RawTimeline { patient_id: patient_id(index), statics, events }, path))
}

/// Continues a walk that currently sits in `state` at time `time`, up to
/// and including a terminal state. The current state emits nothing.
pub(crate) fn walk_from(
    process: &GroundTruthProcess,
    state: usize,
    time: f64,
    rng: &mut ChaCha8Rng,
    patient: u64,
) -> Result<Vec<(usize, ClinicalEvent)>, CohortError> {
    let mut out = Vec::new();
    let mut s = state;
    let mut tau = time;
    while !process.is_terminal(s) {
        if out.len() >= MAX_WALK_STEPS {
            return Err(CohortError::NonConvergentWalk { patient, steps: MAX_WALK_STEPS });
        }
        let spec = process.state(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = spec.transitions.last().expect("non-terminal has transitions");
        for t in &spec.transitions {
            acc += t.p;
            if u < acc {
                chosen = t;
                break;
            }
        }
        let gap = LogNormal::new(chosen.gap_mu, chosen.gap_sigma)
            .expect("validated gap")
            .sample(rng);
        let next_tau = tau + gap;
        tau = if next_tau > tau { next_tau } else { tau.next_up() };
        s = process.state_index(&chosen.to)?;
        out.push((s, emit(process, s, tau, rng)));
    }
    Ok(out)
}

fn emit(process: &GroundTruthProcess, state: usize, time: f64, rng: &mut ChaCha8Rng) -> ClinicalEvent {
    let spec = process.state(state);
    let payload = match &spec.payload {
        EmissionSpec::None => Payload::None,
        EmissionSpec::Normal { means, sds } => {
            let values: Vec<f64> = means
                .iter()
                .zip(sds)
                .map(|(m, s)| Normal::new(*m, *s).expect("validated emission").sample(rng))
                .collect();
            Payload::numeric(&spec.event, &values)
        }
        EmissionSpec::Categorical { codes, weights } => {
            let i = match weights {
                None => rng.random_range(0..codes.len()),
                Some(w) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    w.iter().position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(codes.len() - 1)
                }
            };
            Payload::Code(codes[i].clone())
        }
    };
    ClinicalEvent { time, name: spec.event.clone(), payload }
}

/// One line of the truth sidecar: the hidden state path of a patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub patient_id: String,
    pub states: Vec<String>,
}

pub fn write_truth(
    mut writer: impl Write,
    process: &GroundTruthProcess,
    cohort: &SampledCohort,
) -> std::io::Result<()> {
    for (t, path) in cohort.timelines.iter().zip(&cohort.paths) {
        let rec = TruthRecord {
            patient_id: t.patient_id.clone(),
            states: path.iter().map(|&s| process.state(s).name.clone()).collect(),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a truth sidecar into `patient_id -> state path`.
pub fn read_truth(
    reader: impl BufRead,
    process: &GroundTruthProcess,
) -> crate::Result<BTreeMap<String, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TruthRecord = serde_json::from_str(&line)
            .map_err(|e| CohortError::Truth(format!("line {}: {e}", n + 1)))?;
        let path = rec
            .states
            .iter()
            .map(|s| process.state_index(s))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(rec.patient_id, path);
    }
    Ok(out)
}
