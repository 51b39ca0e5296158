use std::io::{Read, Write};

use super::metrics::{Calibration, MetricResult};
use super::score::ScoreReport;
use super::EvalError;

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Csv(e.to_string())
}

/// `method,metric,value,ci_low,ci_high,higher_is_better`.
pub fn write_metrics_csv(w: impl Write, rows: &[(String, MetricResult)]) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "metric", "value", "ci_low", "ci_high", "higher_is_better"]).map_err(csv_err)?;
    for (method, m) in rows {
        out.write_record([
            method.clone(),
            m.name.clone(),
            m.value.to_string(),
            m.ci_low.to_string(),
            m.ci_high.to_string(),
            m.higher_is_better.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

pub fn read_metrics_csv(r: impl Read) -> Result<Vec<(String, MetricResult)>, EvalError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != ["method", "metric", "value", "ci_low", "ci_high", "higher_is_better"] {
        return Err(EvalError::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| EvalError::Csv(format!("bad number `{}`", &rec[i])));
        let higher = rec[5].parse::<bool>().map_err(|_| EvalError::Csv(format!("bad flag `{}`", &rec[5])))?;
        rows.push((
            rec[0].to_string(),
            MetricResult { name: rec[1].to_string(), value: num(2)?, ci_low: num(3)?, ci_high: num(4)?, higher_is_better: higher },
        ));
    }
    Ok(rows)
}

/// Groups `(method, metric)` rows by method in first-appearance order.
pub fn group_by_method(rows: Vec<(String, MetricResult)>) -> Vec<(String, Vec<MetricResult>)> {
    let mut out: Vec<(String, Vec<MetricResult>)> = Vec::new();
    for (method, m) in rows {
        match out.iter_mut().find(|(name, _)| *name == method) {
            Some((_, v)) => v.push(m),
            None => out.push((method, vec![m])),
        }
    }
    out
}

pub fn write_calibration_csv(w: impl Write, cal: &Calibration) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lower", "upper", "count", "mean_prob", "event_rate"]).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &cal.bins {
        out.write_record([
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            opt(b.mean_prob),
            opt(b.event_rate),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// Raw (unclamped) report: one row per method with score, variance,
/// interval, and per-metric normalized value and weight.
pub fn write_score_csv(w: impl Write, report: &ScoreReport) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["method", "score", "variance", "ci_low", "ci_high"].map(String::from).to_vec();
    for m in &report.included {
        header.push(format!("{m}_normalized"));
        header.push(format!("{m}_weight"));
    }
    out.write_record(&header).map_err(csv_err)?;
    for s in &report.methods {
        let mut rec = vec![
            s.method.clone(),
            s.score.to_string(),
            s.variance.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
        ];
        for (n, w) in s.normalized.iter().zip(&s.weights) {
            rec.push(n.to_string());
            rec.push(w.to_string());
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// Display range of a metric; intervals are clamped to it in tables only.
pub fn valid_range(metric: &str) -> (f64, f64) {
    match metric {
        "auc" | "accuracy" | "brier" | "score" => (0.0, 1.0),
        m if m.contains("r2") => (f64::NEG_INFINITY, 1.0),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

pub fn format_cell(metric: &str, value: f64, low: f64, high: f64) -> String {
    let (a, b) = valid_range(metric);
    format!("{:.3} [{:.3}, {:.3}]", value, low.clamp(a, b), high.clamp(a, b))
}

/// Markdown table: one row per method, `value [low, high]` per metric and
/// the overall score last. Excluded metrics are listed under the table.
pub fn score_markdown(report: &ScoreReport) -> String {
    let metrics: Vec<&str> = report.methods[0].metrics.iter().map(|m| m.name.as_str()).collect();
    let mut s = format!("| Method | {} | Score |\n", metrics.join(" | "));
    s.push_str(&format!("|---|{}---|\n", "---|".repeat(metrics.len())));
    for m in &report.methods {
        let cells: Vec<String> =
            m.metrics.iter().map(|r| format_cell(&r.name, r.value, r.ci_low, r.ci_high)).collect();
        s.push_str(&format!(
            "| {} | {} | {} |\n",
            m.method,
            cells.join(" | "),
            format_cell("score", m.score, m.ci_low, m.ci_high)
        ));
    }
    if !report.excluded.is_empty() {
        s.push('\n');
        for (name, why) in &report.excluded {
            s.push_str(&format!("Excluded `{name}`: {why}.\n"));
        }
    }
    s
}
