use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Phishing, Label::Phishing) => self.tp += 1,
            (Label::Legitimate, Label::Legitimate) => self.tn += 1,
            (Label::Phishing, Label::Legitimate) => self.fp += 1,
            (Label::Legitimate, Label::Phishing) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

/// Phishing is the positive class.
pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        c.record(p, t);
    }
    Ok(c)
}

/// Rates in [0, 1]; `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> MetricReport {
    let ConfusionCounts { tp, tn, fp, fn_ } = *c;
    MetricReport {
        recall: ratio(tp, tp + fn_),
        precision: ratio(tp, tp + fp),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        tnr: ratio(tn, tn + fp),
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
    }
}

/// Half-up rounding to `digits` decimals. A relative nudge absorbs binary
/// representation error so that 97.885 rounds to 97.89.
pub fn round_half_up(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    let scaled = x * scale;
    let nudge = scaled.abs() * 1e-12;
    (scaled + scaled.signum() * nudge + 0.5 * scaled.signum()).trunc() / scale
}

/// Percentage with two decimals, or `undefined`.
pub fn format_pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:.2}", round_half_up(v * 100.0, 2)),
        None => "undefined".to_string(),
    }
}
