use serde::{Deserialize, Serialize};

use crate::corpus::BinaryLabel;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: BinaryLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Regression fields are set for regression runs, classification fields for classification runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub n_examples: usize,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_class: Option<Vec<ClassMetrics>>,
}

/// Predictions paired with their labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<'a> {
    Regression { preds: &'a [f64], labels: &'a [f64] },
    Classification { preds: &'a [BinaryLabel], labels: &'a [BinaryLabel] },
}

pub fn metrics(p: Prediction<'_>) -> Result<MetricsRecord> {
    match p {
        Prediction::Regression { preds, labels } => regression_metrics(preds, labels),
        Prediction::Classification { preds, labels } => classification_metrics(preds, labels),
    }
}

pub fn regression_metrics(preds: &[f64], labels: &[f64]) -> Result<MetricsRecord> {
    ensure!(!preds.is_empty(), Validation, "no examples to evaluate");
    ensure!(
        preds.len() == labels.len(),
        Shape,
        "{} predictions against {} labels",
        preds.len(),
        labels.len()
    );
    let n = preds.len() as f64;
    let (sq, abs) = preds
        .iter()
        .zip(labels)
        .fold((0.0, 0.0), |(s, a), (p, l)| (s + (p - l).powi(2), a + (p - l).abs()));
    Ok(MetricsRecord {
        n_examples: preds.len(),
        rmse: Some((sq / n).sqrt()),
        mae: Some(abs / n),
        macro_f1: None,
        per_class: None,
    })
}

/// Per-class precision, recall, and F1 over `{low, high}`; a ratio with a zero
/// denominator counts as 0. Macro-F1 is their unweighted mean.
pub fn classification_metrics(preds: &[BinaryLabel], labels: &[BinaryLabel]) -> Result<MetricsRecord> {
    ensure!(!preds.is_empty(), Validation, "no examples to evaluate");
    ensure!(
        preds.len() == labels.len(),
        Shape,
        "{} predictions against {} labels",
        preds.len(),
        labels.len()
    );
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = [BinaryLabel::Low, BinaryLabel::High]
        .into_iter()
        .map(|c| {
            let tp = preds.iter().zip(labels).filter(|(p, l)| **p == c && **l == c).count();
            let predicted = preds.iter().filter(|p| **p == c).count();
            let support = labels.iter().filter(|l| **l == c).count();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: c,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    Ok(MetricsRecord {
        n_examples: preds.len(),
        rmse: None,
        mae: None,
        macro_f1: Some(per_class.iter().map(|c| c.f1).sum::<f64>() / 2.0),
        per_class: Some(per_class),
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn rank(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure!(
        x.len() == y.len() && x.len() >= 2,
        Validation,
        "spearman needs two equal-length vectors of at least 2 values ({} vs {})",
        x.len(),
        y.len()
    );
    ensure!(
        x.iter().chain(y).all(|v| v.is_finite()),
        Validation,
        "non-finite value in spearman input"
    );
    pearson(&rank(x), &rank(y))
}
