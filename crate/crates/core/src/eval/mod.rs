//! Fidelity metrics between corpora, task metrics with bootstrap intervals,
//! calibration, and the overall score across methods.

mod fidelity;
mod metrics;
mod report;
mod score;

pub use fidelity::{dimwise_r2, unigram_r2, DimwiseR2, TokenFilter, DEFAULT_TRUNCATION};
pub use metrics::{
    accuracy, auc, auc_value, brier, brier_and_calibration, r2_regression, Calibration, CalibrationBin,
    MetricResult, BOOTSTRAP_RESAMPLES,
};
pub use report::{
    format_cell, group_by_method, read_metrics_csv, score_markdown, valid_range, write_calibration_csv,
    write_metrics_csv, write_score_csv,
};
pub use score::{overall_score, MethodScore, ScoreReport, SIGMA_FLOOR, Z95};

use thiserror::Error;

use crate::zeroshot::{CsvKind, Estimate, InferenceRow, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("corpus has no countable tokens")]
    EmptyCorpus,
    #[error("real frequencies are all equal; R² is undefined")]
    DegenerateReal,
    #[error("AUC needs both classes")]
    SingleClass,
    #[error("R² needs non-constant truths")]
    ConstantTruth,
    #[error("method `{method}` does not report every metric")]
    MissingMetric { method: String },
    #[error("every metric has zero range across methods")]
    NoScorableMetric,
    #[error("metrics file: {0}")]
    Csv(String),
}

/// Task metrics for one estimates file.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Vec<MetricResult>,
    /// Binary tasks only.
    pub calibration: Option<Calibration>,
    /// Rows without an estimate or a label.
    pub skipped: usize,
}

pub const CALIBRATION_BINS: usize = 10;

/// AUC, Brier and calibration for binary tasks, accuracy (argmax) for
/// multiclass, R² for regression.
pub fn evaluate_inference(kind: CsvKind, rows: &[InferenceRow], seed: u64) -> Result<Evaluation, EvalError> {
    match kind {
        CsvKind::Binary => {
            let (p, y): (Vec<f64>, Vec<bool>) = rows
                .iter()
                .filter_map(|r| match (&r.estimate, r.label) {
                    (Estimate::Binary(p), Some(Label::Binary(y))) => Some((*p, y)),
                    _ => None,
                })
                .unzip();
            let calibration = brier_and_calibration(&p, &y, CALIBRATION_BINS)?;
            Ok(Evaluation {
                metrics: vec![auc(&p, &y, seed)?, brier(&p, &y, seed)?],
                calibration: Some(calibration),
                skipped: rows.len() - p.len(),
            })
        }
        CsvKind::Multiclass(_) => {
            let (pred, y): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .filter_map(|r| match (&r.estimate, r.label) {
                    (Estimate::Multiclass(Some(p)), Some(Label::Class(c))) => {
                        let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
                        Some((best, c))
                    }
                    _ => None,
                })
                .unzip();
            Ok(Evaluation {
                metrics: vec![accuracy(&pred, &y, seed)?],
                calibration: None,
                skipped: rows.len() - pred.len(),
            })
        }
        CsvKind::Regression => {
            let (pred, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| match (&r.estimate, r.label) {
                    (Estimate::Regression(Some(v)), Some(Label::Value(t))) if t.is_finite() => Some((*v, t)),
                    _ => None,
                })
                .unzip();
            Ok(Evaluation {
                metrics: vec![r2_regression(&pred, &y, seed)?],
                calibration: None,
                skipped: rows.len() - pred.len(),
            })
        }
    }
}
