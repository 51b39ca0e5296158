use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::event::{ClinicalEvent, Payload, RawTimeline};
use super::hierarchy::{decompose_code, CodeScheme};
use super::interval::IntervalLadder;
use super::quantile::{fit_quantiles, QuantileSpec};
use super::vocab::{TokenClass, TokenDescriptor, Vocabulary, TIMELINE_END, TIMELINE_START};
use super::PhtError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizationConfig {
    pub ladder: IntervalLadder,
    pub quantiles: QuantileSpec,
    pub scheme: CodeScheme,
}

impl TokenizationConfig {
    /// Fits quantiles on every scalar variable observed in `timelines`.
    pub fn fit(
        timelines: &[RawTimeline],
        ladder: IntervalLadder,
        scheme: CodeScheme,
        q: usize,
    ) -> Result<Self, PhtError> {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for e in timelines.iter().flat_map(|t| &t.events) {
            for (var, v) in e.payload.scalars() {
                values.entry(var.to_string()).or_default().push(v);
            }
        }
        Ok(Self { ladder, quantiles: fit_quantiles(&values, q)?, scheme })
    }

    pub fn quantile_surface(q: usize) -> String {
        format!("QNT_{q}")
    }

    pub fn static_surface(attribute: &str, value: &str) -> String {
        format!("{attribute}:{value}")
    }
}

/// A patient's token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pht {
    pub patient_id: String,
    pub tokens: Vec<u32>,
    pub complete: bool,
}

impl Pht {
    /// Checks the structural invariants: leading TIMELINE_START, statics only
    /// in the block right after it, a single trailing TIMELINE_END when
    /// complete, and ids within the vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), PhtError> {
        let bad = |position: usize, reason: &str| {
            Err(PhtError::MalformedSequence { position, reason: reason.to_string() })
        };
        if self.tokens.first() != Some(&vocab.start_id()) {
            return bad(0, "sequence must begin with TIMELINE_START");
        }
        let mut in_static_block = true;
        for (i, &id) in self.tokens.iter().enumerate().skip(1) {
            let Some(class) = vocab.class(id) else {
                return bad(i, "id outside the vocabulary");
            };
            match class {
                TokenClass::Static if !in_static_block => return bad(i, "static token after events"),
                TokenClass::Static => {}
                _ => in_static_block = false,
            }
            if id == vocab.start_id() {
                return bad(i, "repeated TIMELINE_START");
            }
            if id == vocab.end_id() && i + 1 != self.tokens.len() {
                return bad(i, "TIMELINE_END before the end");
            }
        }
        let ends = self.tokens.last() == Some(&vocab.end_id());
        if self.complete != ends {
            return bad(self.tokens.len() - 1, "completeness flag disagrees with TIMELINE_END");
        }
        Ok(())
    }
}

/// Tokens for one event: interval tokens, the event name, then payload.
pub fn tokenize_event(
    event: &ClinicalEvent,
    prev_time: Option<f64>,
    config: &TokenizationConfig,
    vocab: &Vocabulary,
) -> Result<Vec<u32>, PhtError> {
    let mut out = Vec::new();
    if let Some(prev) = prev_time {
        for label in config.ladder.tokens(event.time - prev)? {
            out.push(vocab.id(label)?);
        }
    }
    out.push(event_name_id(&event.name, vocab)?);
    match &event.payload {
        Payload::None => {}
        Payload::Code(code) => {
            for part in decompose_code(code, &config.scheme)? {
                out.push(vocab.id(part)?);
            }
        }
        p => {
            for (var, v) in p.scalars() {
                let q = config.quantiles.quantile_token(var, v)?;
                out.push(vocab.id(&TokenizationConfig::quantile_surface(q))?);
            }
        }
    }
    Ok(out)
}

fn event_name_id(name: &str, vocab: &Vocabulary) -> Result<u32, PhtError> {
    let id = vocab.id(name)?;
    if vocab.class(id) != Some(TokenClass::EventName) {
        return Err(PhtError::TokenNotInVocabulary(name.to_string()));
    }
    Ok(id)
}

pub fn tokenize_timeline(
    timeline: &RawTimeline,
    config: &TokenizationConfig,
    vocab: &Vocabulary,
) -> Result<Pht, PhtError> {
    if timeline.events.is_empty() {
        return Err(PhtError::EmptyTimeline(timeline.patient_id.clone()));
    }
    let mut tokens = vec![vocab.start_id()];
    for (attr, value) in &timeline.statics {
        tokens.push(vocab.id(&TokenizationConfig::static_surface(attr, value))?);
    }
    let mut prev = None;
    for (i, e) in timeline.events.iter().enumerate() {
        if !e.time.is_finite() {
            return Err(PhtError::NonFiniteTimestamp(e.name.clone()));
        }
        if prev.is_some_and(|p| e.time < p) {
            return Err(PhtError::OutOfOrder { patient: timeline.patient_id.clone(), index: i });
        }
        tokens.extend(tokenize_event(e, prev, config, vocab)?);
        prev = Some(e.time);
    }
    tokens.push(vocab.end_id());
    Ok(Pht { patient_id: timeline.patient_id.clone(), tokens, complete: true })
}

/// Corpus-derived vocabulary. Every interval label and every quantile token
/// is included whether or not the cohort uses it.
pub fn build_vocabulary(
    timelines: &[RawTimeline],
    config: &TokenizationConfig,
) -> Result<Vocabulary, PhtError> {
    if timelines.is_empty() {
        return Err(PhtError::EmptyCohort);
    }
    let mut set: BTreeSet<(TokenClass, String)> = BTreeSet::new();
    set.insert((TokenClass::Structural, TIMELINE_START.into()));
    set.insert((TokenClass::Structural, TIMELINE_END.into()));
    for t in timelines {
        for (a, v) in &t.statics {
            set.insert((TokenClass::Static, TokenizationConfig::static_surface(a, v)));
        }
        for e in &t.events {
            set.insert((TokenClass::EventName, e.name.clone()));
            if let Payload::Code(code) = &e.payload {
                for part in decompose_code(code, &config.scheme)? {
                    set.insert((TokenClass::Hierarchical, part.to_string()));
                }
            }
        }
    }
    for label in config.ladder.labels() {
        set.insert((TokenClass::Interval, label.to_string()));
    }
    for q in 0..config.quantiles.q {
        set.insert((TokenClass::Quantile, TokenizationConfig::quantile_surface(q)));
    }
    Vocabulary::from_descriptors(
        set.into_iter().map(|(class, surface)| TokenDescriptor { surface, class }).collect(),
    )
}

/// Fits the tokenizer on `timelines`, builds the vocabulary and tokenizes
/// every timeline against it.
pub fn tokenize_cohort(
    timelines: &[RawTimeline],
    ladder: IntervalLadder,
    scheme: CodeScheme,
    q: usize,
) -> Result<(TokenizationConfig, Vocabulary, Vec<Pht>), PhtError> {
    let config = TokenizationConfig::fit(timelines, ladder, scheme, q)?;
    let vocab = build_vocabulary(timelines, &config)?;
    let phts = timelines
        .iter()
        .map(|t| tokenize_timeline(t, &config, &vocab))
        .collect::<Result<_, _>>()?;
    Ok((config, vocab, phts))
}

/// Bin-level reconstruction of one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSketch {
    pub name: String,
    /// Interval labels emitted before the event (repeats only for long gaps).
    pub intervals: Vec<String>,
    pub quantiles: Vec<usize>,
    pub code: Option<String>,
}

pub fn detokenize(
    pht: &Pht,
    vocab: &Vocabulary,
    config: &TokenizationConfig,
) -> Result<Vec<EventSketch>, PhtError> {
    let bad = |position: usize, reason: String| Err(PhtError::MalformedSequence { position, reason });
    let toks = &pht.tokens;
    if toks.first() != Some(&vocab.start_id()) {
        return bad(0, "missing TIMELINE_START".into());
    }
    let mut sketches: Vec<EventSketch> = Vec::new();
    let mut code_parts: Vec<&str> = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut in_static_block = true;
    let mut ended = false;

    let flush_code = |sketches: &mut Vec<EventSketch>, parts: &mut Vec<&str>| {
        if let Some(last) = sketches.last_mut() {
            if !parts.is_empty() {
                last.code = Some(parts.join("."));
            }
        }
        parts.clear();
    };

    for (i, &id) in toks.iter().enumerate().skip(1) {
        if ended {
            return bad(i, "token after TIMELINE_END".into());
        }
        let Some(desc) = vocab.get(id) else {
            return bad(i, format!("id {id} outside the vocabulary"));
        };
        let in_block = in_static_block;
        if desc.class != TokenClass::Static {
            in_static_block = false;
        }
        match desc.class {
            TokenClass::Structural if id == vocab.end_id() => {
                if !pending.is_empty() {
                    return bad(i, "interval token with no following event".into());
                }
                ended = true;
            }
            TokenClass::Structural => return bad(i, "repeated TIMELINE_START".into()),
            TokenClass::Static if in_block => {}
            TokenClass::Static => return bad(i, "static token after events".into()),
            TokenClass::Interval => {
                if sketches.is_empty() {
                    return bad(i, "interval token before the first event".into());
                }
                let top = config.ladder.top_label();
                if let Some(first) = pending.first() {
                    if first != &desc.surface || first != top {
                        return bad(i, "only the top interval label may repeat".into());
                    }
                    if pending.len() >= config.ladder.long_gap_cap() {
                        return bad(i, "long-gap repetition exceeds the cap".into());
                    }
                }
                pending.push(desc.surface.clone());
            }
            TokenClass::EventName => {
                flush_code(&mut sketches, &mut code_parts);
                sketches.push(EventSketch {
                    name: desc.surface.clone(),
                    intervals: std::mem::take(&mut pending),
                    quantiles: Vec::new(),
                    code: None,
                });
            }
            TokenClass::Quantile => {
                let Some(last) = sketches.last_mut() else {
                    return bad(i, "quantile token with no event".into());
                };
                if !pending.is_empty() || !code_parts.is_empty() {
                    return bad(i, "quantile token out of place".into());
                }
                let q = desc
                    .surface
                    .strip_prefix("QNT_")
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| PhtError::MalformedSequence {
                        position: i,
                        reason: format!("bad quantile surface `{}`", desc.surface),
                    })?;
                last.quantiles.push(q);
            }
            TokenClass::Hierarchical => {
                let Some(last) = sketches.last() else {
                    return bad(i, "code token with no event".into());
                };
                if !pending.is_empty() || !last.quantiles.is_empty() {
                    return bad(i, "code token out of place".into());
                }
                if code_parts.len() >= config.scheme.max_levels {
                    return bad(i, "code has more levels than the scheme allows".into());
                }
                code_parts.push(&desc.surface);
            }
        }
    }
    flush_code(&mut sketches, &mut code_parts);
    if pht.complete && !ended {
        return bad(toks.len(), "complete sequence without TIMELINE_END".into());
    }
    Ok(sketches)
}
