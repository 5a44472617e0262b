use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Accuracy,
    RocAuc,
}

/// Index of the largest entry; ties go to the smaller index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(SugarError::Empty("evaluation split"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Area under the ROC curve for binary labels, counting score ties as 1/2.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.is_empty() {
        return Err(SugarError::Empty("evaluation split"));
    }
    let mut ranked: Vec<(f64, usize)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = ranked.iter().filter(|(_, y)| *y == 1).count();
    let negatives = ranked.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SugarError::RocAucUndefined);
    }
    // Mann-Whitney U with mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < ranked.len() {
        let mut j = i;
        while j < ranked.len() && ranked[j].0 == ranked[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * ranked[i..j].iter().filter(|(_, y)| *y == 1).count() as f64;
        i = j;
    }
    let u = rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives * negatives) as f64)
}

/// Scores a set of class-probability vectors. ROC-AUC uses the probability
/// of class 1.
pub fn evaluate(probs: &[Vec<f64>], labels: &[usize], metric: Metric) -> Result<f64> {
    match metric {
        Metric::Accuracy => {
            let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
            accuracy(&preds, labels)
        }
        Metric::RocAuc => {
            let scores: Vec<f64> = probs.iter().map(|p| p.get(1).copied().unwrap_or(0.0)).collect();
            roc_auc(&scores, labels)
        }
    }
}
