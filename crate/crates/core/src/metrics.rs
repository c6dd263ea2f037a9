//! Binary classification counts and the derived percentage metrics.
//!
//! The positive class is UC (label 1).

use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Counts outcomes of binary predictions against ground truth.
pub fn confusion(predictions: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: truth.len() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        if p > 1 || t > 1 {
            return Err(Error::ClassOutOfRange { class: p.max(t) as usize, classes: 2 });
        }
        c.record(p == 1, t == 1);
    }
    Ok(c)
}

/// Percentages in `[0, 100]`; `None` where the ratio is `0/0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Harmonic mean of two percentages.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    MetricsReport {
        precision,
        recall,
        f1,
        specificity: ratio(c.tn, c.tn + c.fp),
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 5] = ["precision", "recall", "f1", "specificity", "accuracy"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.precision, self.recall, self.f1, self.specificity, self.accuracy]
    }
}

/// Two-decimal rendering; absent values become "—".
pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => String::from("—"),
    }
}
