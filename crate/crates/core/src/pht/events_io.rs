use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::event::{order_events, ClinicalEvent, NameDictionary, Payload, RawTimeline};
use super::PhtError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Static,
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordValue {
    Number(f64),
    Numbers(Vec<f64>),
    Code(String),
}

/// One line of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub patient_id: String,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub name: String,
    #[serde(default)]
    pub value: Option<RecordValue>,
}

/// Reads a line-delimited event stream. Patients are returned in order of
/// first appearance; each patient's events are sorted by (time, name key).
pub fn read_event_stream(reader: impl BufRead) -> Result<Vec<RawTimeline>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_patient: BTreeMap<String, RawTimeline> = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| PhtError::InvalidRecord { line: n + 1, reason };
        let rec: EventRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let entry = by_patient.entry(rec.patient_id.clone()).or_insert_with(|| {
            order.push(rec.patient_id.clone());
            RawTimeline { patient_id: rec.patient_id.clone(), ..Default::default() }
        });
        match rec.kind {
            RecordKind::Static => {
                let Some(RecordValue::Code(v)) = rec.value else {
                    return Err(bad("static record needs a string value".into()).into());
                };
                entry.statics.insert(rec.name, v);
            }
            RecordKind::Event => {
                let t = rec.t.ok_or_else(|| bad("event record needs `t`".into()))?;
                if !t.is_finite() {
                    return Err(bad("non-finite `t`".into()).into());
                }
                let payload = match rec.value {
                    None => Payload::None,
                    Some(RecordValue::Number(x)) => Payload::numeric(&rec.name, &[x]),
                    Some(RecordValue::Numbers(xs)) => Payload::numeric(&rec.name, &xs),
                    Some(RecordValue::Code(c)) => Payload::Code(c),
                };
                entry.events.push(ClinicalEvent { time: t, name: rec.name, payload });
            }
        }
    }
    let mut timelines: Vec<RawTimeline> =
        order.iter().map(|id| by_patient.remove(id).expect("patient recorded")).collect();
    let dict = NameDictionary::from_timelines(timelines.iter());
    for t in &mut timelines {
        t.events = order_events(std::mem::take(&mut t.events), &dict)?;
    }
    Ok(timelines)
}

pub fn write_event_stream(mut writer: impl Write, timelines: &[RawTimeline]) -> Result<()> {
    for t in timelines {
        for (name, value) in &t.statics {
            let rec = EventRecord {
                patient_id: t.patient_id.clone(),
                kind: RecordKind::Static,
                t: None,
                name: name.clone(),
                value: Some(RecordValue::Code(value.clone())),
            };
            write_record(&mut writer, &rec)?;
        }
        for e in &t.events {
            let value = match &e.payload {
                Payload::None => None,
                Payload::Scalar { value, .. } => Some(RecordValue::Number(*value)),
                Payload::Vector { values, .. } => Some(RecordValue::Numbers(values.clone())),
                Payload::Code(c) => Some(RecordValue::Code(c.clone())),
            };
            let rec = EventRecord {
                patient_id: t.patient_id.clone(),
                kind: RecordKind::Event,
                t: Some(e.time),
                name: e.name.clone(),
                value,
            };
            write_record(&mut writer, &rec)?;
        }
    }
    Ok(())
}

fn write_record(writer: &mut impl Write, rec: &EventRecord) -> Result<()> {
    serde_json::to_writer(&mut *writer, rec).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_value_shapes() {
        let text = r#"{"patient_id":"a","kind":"static","name":"SEX","value":"F"}
{"patient_id":"a","kind":"event","t":10.5,"name":"lab","value":[1.0,2]}
{"patient_id":"b","kind":"event","t":0,"name":"dx","value":"E11.65"}
{"patient_id":"a","kind":"event","t":3,"name":"hr","value":71}
{"patient_id":"a","kind":"event","t":3,"name":"adm","value":null}
"#;
        let ts = read_event_stream(text.as_bytes()).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].patient_id, "a");
        assert_eq!(ts[0].statics["SEX"], "F");
        let names: Vec<&str> = ts[0].events.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["adm", "hr", "lab"]);
        assert_eq!(ts[0].events[1].payload, Payload::Scalar { variable: "hr".into(), value: 71.0 });
        assert_eq!(
            ts[0].events[2].payload,
            Payload::Vector { variables: vec!["lab[0]".into(), "lab[1]".into()], values: vec![1.0, 2.0] }
        );
        assert_eq!(ts[1].events[0].payload, Payload::Code("E11.65".into()));
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = r#"{"patient_id":"a","kind":"static","name":"SEX","value":"F"}
{"patient_id":"a","kind":"event","t":0.1,"name":"hr","value":71.25}
{"patient_id":"a","kind":"event","t":3.0,"name":"dx","value":"E11.65"}
{"patient_id":"a","kind":"event","t":4.0,"name":"lab","value":[1.0,2.5]}
{"patient_id":"a","kind":"event","t":5.0,"name":"adm","value":null}
"#;
        let ts = read_event_stream(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_event_stream(&mut out, &ts).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(read_event_stream(out.as_slice()).unwrap(), ts);
    }

    #[test]
    fn bad_lines_report_position() {
        let text = "{\"patient_id\":\"a\",\"kind\":\"event\",\"name\":\"x\"}\n";
        match read_event_stream(text.as_bytes()) {
            Err(crate::Error::Pht(PhtError::InvalidRecord { line: 1, .. })) => {}
            other => panic!("{other:?}"),
        }
        let text = "{\"patient_id\":\"a\",\"kind\":\"other\",\"t\":1,\"name\":\"x\"}\n";
        assert!(read_event_stream(text.as_bytes()).is_err());
    }
}
