use std::io::Write;

use crate::error::{Error, Result};

/// Confusion counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// `tp + fp == 0`; precision reported as 0.
    pub precision_undefined: bool,
    /// `tp + fn == 0`; recall reported as 0.
    pub recall_undefined: bool,
    /// `precision + recall == 0`; F-score reported as 0.
    pub f_undefined: bool,
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let sum = precision + recall;
        let (f_score, f_undefined) = if sum > 0.0 {
            (2.0 * precision * recall / sum, false)
        } else {
            (0.0, true)
        };
        EvalMetrics {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f_score,
            precision_undefined,
            recall_undefined,
            f_undefined,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Scores binary predictions against truth; `true` means abnormal.
pub fn f_score(pred: &[bool], truth: &[bool]) -> Result<EvalMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "prediction and truth lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("cannot score zero predictions"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(EvalMetrics::from_counts(tp, fp, tn, fn_))
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub augmenter: String,
    pub trial: usize,
    pub replicate: usize,
    pub ratio: f64,
    pub metrics: EvalMetrics,
    pub seed: u64,
}

pub const METRICS_HEADER: &str = "augmenter,trial,replicate,ratio,tp,fp,tn,fn,precision,recall,f_score,seed";

pub fn write_metrics<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.augmenter, r.trial, r.replicate, r.ratio, m.tp, m.fp, m.tn, m.fn_, m.precision, m.recall, m.f_score, r.seed
        )?;
    }
    Ok(())
}
