//! Evaluation metrics.

use std::fmt;

use crate::{Error, Result};

pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("accuracy of an empty set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `1 − SSE/SST` around the mean of the truth.
pub fn predictive_r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions for {} responses", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("R² of an empty set".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidParameter("R² is undefined for a constant response".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Micro-averaged precision, recall and F1 over every (document, label)
/// decision. Any 0/0 is taken as 0.
pub fn prf1_multilabel(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<Prf1> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions for {} label sets", pred.len(), truth.len())));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        let hit = p.iter().filter(|l| t.contains(l)).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += t.iter().filter(|l| !p.contains(l)).count();
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Prf1 { precision, recall, f1, tp, fp, fn_ })
}

/// Named metric values, printed one `metric<TAB>value` per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub entries: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn accuracy(value: f64) -> Self {
        let mut r = Self::default();
        r.push("accuracy", value);
        r
    }

    pub fn regression(r2: f64) -> Self {
        let mut r = Self::default();
        r.push("predictive_r2", r2);
        r
    }

    pub fn multilabel(m: &Prf1) -> Self {
        let mut r = Self::default();
        r.push("precision", m.precision);
        r.push("recall", m.recall);
        r.push("f1", m.f1);
        r.push("tp", m.tp as f64);
        r.push("fp", m.fp as f64);
        r.push("fn", m.fn_ as f64);
        r
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.entries {
            writeln!(f, "{name}\t{value}")?;
        }
        Ok(())
    }
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
