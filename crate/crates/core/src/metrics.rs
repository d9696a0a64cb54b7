//! Regression, contract-classification, calibration and graph-level metrics.
//!
//! Contract scores and labels are `n_edges x K` row-major matrices
//! (`&[Vec<f64>]`, `&[Vec<bool>]`). Ranking and threshold metrics are
//! macro-averaged over contracts by default; calibration metrics pool every
//! (edge, contract) pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "length mismatch: {} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// Returns K.
fn check_matrix<T>(scores: &[Vec<f64>], labels: &[Vec<T>]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} score rows vs {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    let k = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|r| r.len() != k) || labels.iter().any(|r| r.len() != k) {
        return Err(Error::Validation("ragged score/label matrix".into()));
    }
    if scores.is_empty() || k == 0 {
        return Err(Error::Validation("empty score matrix".into()));
    }
    Ok(k)
}

fn check_probabilities(probs: &[Vec<f64>]) -> Result<()> {
    match probs.iter().flatten().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Error::Validation(format!("probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn column<T: Copy>(m: &[Vec<T>], k: usize) -> Vec<T> {
    m.iter().map(|r| r[k]).collect()
}

/// Average precision of one ranking; `None` when there are no positives.
///
/// Items are ordered by descending score, ties by ascending index.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuprcResult {
    pub value: f64,
    /// Contracts left out of the macro average for having no positives.
    pub excluded: Vec<usize>,
}

pub fn auprc(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    averaging: Averaging,
) -> Result<AuprcResult> {
    let k = check_matrix(scores, labels)?;
    match averaging {
        Averaging::Micro => {
            let s: Vec<f64> = scores.iter().flatten().copied().collect();
            let l: Vec<bool> = labels.iter().flatten().copied().collect();
            let value = average_precision(&s, &l)
                .ok_or_else(|| Error::Domain("AUPRC undefined: no positive labels".into()))?;
            Ok(AuprcResult {
                value,
                excluded: Vec::new(),
            })
        }
        Averaging::Macro => {
            let mut excluded = Vec::new();
            let mut aps = Vec::new();
            for c in 0..k {
                match average_precision(&column(scores, c), &column(labels, c)) {
                    Some(ap) => aps.push(ap),
                    None => excluded.push(c),
                }
            }
            if aps.is_empty() {
                return Err(Error::Domain(
                    "AUPRC undefined: every contract has zero positives".into(),
                ));
            }
            Ok(AuprcResult {
                value: aps.iter().sum::<f64>() / aps.len() as f64,
                excluded,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    /// 0 when precision + recall = 0; 1 when there is nothing to find and
    /// nothing was predicted.
    fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

/// F1 with predictions binarized at `score >= threshold`.
pub fn f1_at(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    threshold: f64,
    averaging: Averaging,
) -> Result<f64> {
    let k = check_matrix(scores, labels)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Validation(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let mut per = vec![Confusion::default(); k];
    for (srow, lrow) in scores.iter().zip(labels) {
        for c in 0..k {
            per[c].add(srow[c] >= threshold, lrow[c]);
        }
    }
    Ok(match averaging {
        Averaging::Macro => per.iter().map(Confusion::f1).sum::<f64>() / k as f64,
        Averaging::Micro => {
            let pooled = per.iter().fold(Confusion::default(), |a, c| Confusion {
                tp: a.tp + c.tp,
                fp: a.fp + c.fp,
                fn_: a.fn_ + c.fn_,
            });
            pooled.f1()
        }
    })
}

/// Mean squared probability error over all (edge, contract) pairs.
pub fn brier(probs: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<f64> {
    let k = check_matrix(probs, labels)?;
    check_probabilities(probs)?;
    let s: f64 = probs
        .iter()
        .flatten()
        .zip(labels.iter().flatten())
        .map(|(p, &y)| (p - y as u8 as f64).powi(2))
        .sum();
    Ok(s / (probs.len() * k) as f64)
}

/// Expected calibration error with equal-width bins on `[0, 1]`; a
/// probability of exactly 1 falls in the last bin.
pub fn ece(probs: &[Vec<f64>], labels: &[Vec<bool>], n_bins: usize) -> Result<f64> {
    let k = check_matrix(probs, labels)?;
    check_probabilities(probs)?;
    if n_bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0; n_bins];
    let mut acc = vec![0.0; n_bins];
    for (&p, &y) in probs.iter().flatten().zip(labels.iter().flatten()) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        conf[b] += p;
        acc[b] += y as u8 as f64;
    }
    let total = (probs.len() * k) as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let n = count[b] as f64;
            (n / total) * (acc[b] / n - conf[b] / n).abs()
        })
        .sum())
}

/// Mean absolute gap between predicted and true Q_total across groups.
pub fn graph_error(q_hat: &[f64], q_true: &[f64]) -> Result<f64> {
    check_pair(q_hat, q_true)?;
    if let Some(q) = q_hat
        .iter()
        .chain(q_true)
        .find(|q| !(0.0..=1.0).contains(*q))
    {
        return Err(Error::Validation(format!("Q_total {q} outside [0, 1]")));
    }
    mae(q_hat, q_true)
}

/// Model outputs aligned with ground truth for one evaluation split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionBatch {
    pub mos_pred: Vec<f64>,
    pub mos_true: Vec<f64>,
    /// Empty for models without a contract head.
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractMetrics {
    pub auprc: f64,
    pub f1_at_half: f64,
    pub brier: f64,
    pub ece: f64,
    pub excluded: Vec<usize>,
}

impl PredictionBatch {
    pub fn validate(&self) -> Result<()> {
        check_pair(&self.mos_pred, &self.mos_true)?;
        if !self.probs.is_empty() {
            check_matrix(&self.probs, &self.labels)?;
            check_probabilities(&self.probs)?;
            if self.probs.len() != self.mos_pred.len() {
                return Err(Error::Validation(
                    "contract outputs and MOS outputs cover different edges".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn mos_mae(&self) -> Result<f64> {
        mae(&self.mos_pred, &self.mos_true)
    }

    pub fn mos_rmse(&self) -> Result<f64> {
        rmse(&self.mos_pred, &self.mos_true)
    }

    /// `None` for models without contract outputs.
    pub fn contract_metrics(&self, averaging: Averaging) -> Result<Option<ContractMetrics>> {
        if self.probs.is_empty() {
            return Ok(None);
        }
        self.validate()?;
        let ap = auprc(&self.probs, &self.labels, averaging)?;
        Ok(Some(ContractMetrics {
            auprc: ap.value,
            f1_at_half: f1_at(&self.probs, &self.labels, 0.5, averaging)?,
            brier: brier(&self.probs, &self.labels)?,
            ece: ece(&self.probs, &self.labels, 10)?,
            excluded: ap.excluded,
        }))
    }
}
