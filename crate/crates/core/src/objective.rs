//! Loss terms of the joint objective: per-model empirical risk, the
//! supervised contrastive term, the pairwise edge-weight diversity penalty
//! and their weighted sum.
//!
//! Every function returns a quantity to minimise. Terms that feed training
//! also have a `_with_grad` form returning the gradient with respect to
//! their direct inputs (logits, embeddings, edge weights).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};
use crate::graph::EdgeWeights;
use crate::model::softmax;

/// Added inside the square root when normalising embeddings so that an
/// all-zero embedding has a defined (zero) direction.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Weight of the contrastive term.
    pub alpha: f64,
    /// Weight of the diversity term.
    pub beta: f64,
    pub temperature: f64,
    pub similarity: Similarity,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 1.0,
            beta: 1.0,
            temperature: 1.0,
            similarity: Similarity::Cosine,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(SugarError::Config("alpha and beta must be >= 0".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(SugarError::Config("temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// Graph embeddings produced by one base model for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub model_index: usize,
}

/// Mean negative log-likelihood of the true class.
pub fn empirical_risk(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() {
        return Err(SugarError::EmptyBatch);
    }
    if probs.len() != labels.len() {
        return Err(SugarError::MisalignedWeights {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    let total: f64 = probs.iter().zip(labels).map(|(p, &y)| -p[y].ln()).sum();
    Ok(total / probs.len() as f64)
}

/// Cross-entropy of one example computed from logits, with its gradient.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (lse - logits[label], grad)
}

fn normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + NORM_EPS).sqrt();
    (v.iter().map(|x| x / norm).collect(), norm)
}

/// In-batch supervised contrastive loss.
///
/// For each anchor with at least one other same-label member and at least
/// one different-label member, the InfoNCE term
/// `-log(e^{s_ap} / (e^{s_ap} + sum_n e^{s_an}))` is averaged over its
/// positives `p`; negatives `n` are all different-label members and
/// `s = cos / temperature`. The loss is the mean over valid anchors, or 0
/// (with a warning) when no anchor is valid.
pub fn contrastive_loss(batch: &ContrastiveBatch, config: &ObjectiveConfig) -> Result<f64> {
    contrastive_loss_with_grad(batch, config).map(|(l, _)| l)
}

/// [`contrastive_loss`] and its gradient with respect to every embedding.
pub fn contrastive_loss_with_grad(batch: &ContrastiveBatch, config: &ObjectiveConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    let b = batch.embeddings.len();
    if b != batch.labels.len() {
        return Err(SugarError::MisalignedWeights {
            expected: b,
            got: batch.labels.len(),
        });
    }
    let dim = batch.embeddings.first().map_or(0, Vec::len);
    let mut grads = vec![vec![0.0; dim]; b];
    let tau = config.temperature;
    let normed: Vec<(Vec<f64>, f64)> = batch.embeddings.iter().map(|e| normalize(e)).collect();
    let sim =
        |i: usize, j: usize| -> f64 { normed[i].0.iter().zip(&normed[j].0).map(|(x, y)| x * y).sum::<f64>() / tau };

    let anchors: Vec<usize> = (0..b)
        .filter(|&a| {
            let y = batch.labels[a];
            let has_pos = (0..b).any(|j| j != a && batch.labels[j] == y);
            let has_neg = batch.labels.iter().any(|&l| l != y);
            has_pos && has_neg
        })
        .collect();
    if anchors.is_empty() {
        log::warn!(
            "contrastive batch for model {} has no valid anchor; term contributes 0",
            batch.model_index
        );
        return Ok((0.0, grads));
    }

    // dL/dS for the similarity matrix S.
    let mut ds = vec![0.0; b * b];
    let mut total = 0.0;
    let scale = 1.0 / anchors.len() as f64;
    for &a in &anchors {
        let y = batch.labels[a];
        let positives: Vec<usize> = (0..b).filter(|&j| j != a && batch.labels[j] == y).collect();
        let negatives: Vec<usize> = (0..b).filter(|&j| batch.labels[j] != y).collect();
        let neg_sims: Vec<f64> = negatives.iter().map(|&n| sim(a, n)).collect();
        let w = scale / positives.len() as f64;
        for &p in &positives {
            let sp = sim(a, p);
            let max = neg_sims.iter().cloned().fold(sp, f64::max);
            let denom: f64 = (sp - max).exp() + neg_sims.iter().map(|s| (s - max).exp()).sum::<f64>();
            total += w * (max + denom.ln() - sp);
            let pi_p = (sp - max).exp() / denom;
            ds[a * b + p] += w * (pi_p - 1.0);
            for (&n, &sn) in negatives.iter().zip(&neg_sims) {
                ds[a * b + n] += w * (sn - max).exp() / denom;
            }
        }
    }

    // S_ij = u_i . u_j / tau with u = v / |v|.
    for i in 0..b {
        let mut du = vec![0.0; dim];
        for j in 0..b {
            let g = (ds[i * b + j] + ds[j * b + i]) / tau;
            if g != 0.0 {
                for (d, x) in du.iter_mut().zip(&normed[j].0) {
                    *d += g * x;
                }
            }
        }
        let (u, norm) = &normed[i];
        let proj: f64 = u.iter().zip(&du).map(|(x, y)| x * y).sum();
        for k in 0..dim {
            grads[i][k] = (du[k] - u[k] * proj) / norm;
        }
    }
    Ok((total, grads))
}

/// Size-normalised inner product `(1/|E|) sum_k w1_k * w2_k`.
pub fn diversity_similarity(w1: &EdgeWeights, w2: &EdgeWeights) -> Result<f64> {
    diversity_raw(w1.values(), w2.values())
}

pub(crate) fn diversity_raw(w1: &[f64], w2: &[f64]) -> Result<f64> {
    if w1.len() != w2.len() {
        return Err(SugarError::MisalignedWeights {
            expected: w1.len(),
            got: w2.len(),
        });
    }
    if w1.is_empty() {
        return Ok(0.0);
    }
    Ok(w1.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>() / w1.len() as f64)
}

/// Gradient of `beta * sum_i sum_{j != i} delta(w_i, w_j)` with respect to
/// model `model`'s weights on one graph, when that graph contributes with
/// weight `batch_weight` (1/B for a batch mean).
pub fn diversity_grad(model: usize, per_model: &[&[f64]], beta: f64, batch_weight: f64) -> Vec<f64> {
    let len = per_model[model].len();
    let mut grad = vec![0.0; len];
    if len == 0 {
        return grad;
    }
    // Each unordered pair appears twice in the ordered double sum.
    let c = 2.0 * beta * batch_weight / len as f64;
    for (j, w) in per_model.iter().enumerate() {
        if j != model {
            for (g, x) in grad.iter_mut().zip(w.iter()) {
                *g += c * x;
            }
        }
    }
    grad
}

/// Sum over ordered model pairs `i != j` of the batch-mean diversity
/// similarity. `pairwise[i][g]` holds model `i`'s weights on batch graph `g`.
pub fn pairwise_diversity(pairwise: &[Vec<EdgeWeights>]) -> Result<f64> {
    let n = pairwise.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if pairwise[i].len() != pairwise[j].len() {
                return Err(SugarError::MisalignedWeights {
                    expected: pairwise[i].len(),
                    got: pairwise[j].len(),
                });
            }
            let graphs = pairwise[i].len();
            if graphs == 0 {
                continue;
            }
            let mut sum = 0.0;
            for g in 0..graphs {
                sum += diversity_similarity(&pairwise[i][g], &pairwise[j][g])?;
            }
            total += sum / graphs as f64;
        }
    }
    Ok(total)
}

/// Per-term breakdown of the joint objective; also the JSONL loss-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub risk: Vec<f64>,
    pub contrastive: Vec<f64>,
    /// Unweighted ordered-pair diversity sum.
    pub diversity: f64,
    pub total: f64,
}

/// `sum_i (R_i + alpha * L_i) + beta * sum_i sum_{j != i} mean_g delta(w_i, w_j)`.
pub fn total_objective(
    per_model_risks: &[f64],
    per_model_contrastive: &[f64],
    pairwise_weights: &[Vec<EdgeWeights>],
    config: &ObjectiveConfig,
) -> Result<ObjectiveBreakdown> {
    let n = per_model_risks.len();
    if n == 0 {
        return Err(SugarError::Empty("model list"));
    }
    if per_model_contrastive.len() != n || pairwise_weights.len() != n {
        return Err(SugarError::MisalignedWeights {
            expected: n,
            got: per_model_contrastive.len().min(pairwise_weights.len()),
        });
    }
    let diversity = pairwise_diversity(pairwise_weights)?;
    combine(per_model_risks, per_model_contrastive, diversity, config)
}

pub(crate) fn combine(
    risks: &[f64],
    contrastive: &[f64],
    diversity: f64,
    config: &ObjectiveConfig,
) -> Result<ObjectiveBreakdown> {
    for (i, (r, c)) in risks.iter().zip(contrastive).enumerate() {
        if !r.is_finite() {
            return Err(SugarError::NonFinite(format!("risk of model {i}")));
        }
        if !c.is_finite() {
            return Err(SugarError::NonFinite(format!("contrastive term of model {i}")));
        }
    }
    if !diversity.is_finite() {
        return Err(SugarError::NonFinite("diversity term".into()));
    }
    let mut total = 0.0;
    for (r, c) in risks.iter().zip(contrastive) {
        total += r + config.alpha * c;
    }
    total += config.beta * diversity;
    Ok(ObjectiveBreakdown {
        risk: risks.to_vec(),
        contrastive: contrastive.to_vec(),
        diversity,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ew(v: &[f64]) -> EdgeWeights {
        EdgeWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn risk_examples() {
        assert_eq!(empirical_risk(&[vec![1.0, 0.0]], &[0]).unwrap(), 0.0);
        let u = vec![1.0 / 3.0; 3];
        assert!((empirical_risk(&[u.clone(), u], &[0, 2]).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!((empirical_risk(&[vec![0.5, 0.5]], &[0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(empirical_risk(&[], &[]), Err(SugarError::EmptyBatch)));
    }

    #[test]
    fn cross_entropy_matches_risk() {
        let logits = [0.3, -1.2, 2.0];
        let (l, g) = cross_entropy_with_grad(&logits, 1);
        let p = softmax(&logits);
        assert!((l + p[1].ln()).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn contrastive_closed_form() {
        // anchor/positive aligned, negative opposite, M = 1
        let batch = ContrastiveBatch {
            embeddings: vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![-1.0, 0.0]],
            labels: vec![0, 0, 1],
            model_index: 0,
        };
        let cfg = ObjectiveConfig::default();
        // Anchors 0 and 1 each give -log(e/(e+e^-1)); anchor 2 has no positive.
        let expected = -(1f64.exp() / (1f64.exp() + (-1f64).exp())).ln();
        assert!((expected - 0.1269).abs() < 1e-4);
        let loss = contrastive_loss(&batch, &cfg).unwrap();
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    }

    #[test]
    fn contrastive_identical_embeddings() {
        // 2 labels x 2 members: each anchor has M = 2 negatives.
        let batch = ContrastiveBatch {
            embeddings: vec![vec![0.5, 0.5]; 4],
            labels: vec![0, 0, 1, 1],
            model_index: 0,
        };
        let loss = contrastive_loss(&batch, &ObjectiveConfig::default()).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn contrastive_single_label_is_zero() {
        let batch = ContrastiveBatch {
            embeddings: vec![vec![1.0, 2.0], vec![0.0, 1.0]],
            labels: vec![1, 1],
            model_index: 3,
        };
        let (loss, grads) = contrastive_loss_with_grad(&batch, &ObjectiveConfig::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        let batch = ContrastiveBatch {
            embeddings: vec![
                vec![0.3, -0.2, 0.9],
                vec![0.1, 0.4, 0.2],
                vec![-0.7, 0.2, 0.1],
                vec![0.5, 0.5, -0.3],
                vec![0.2, -0.6, 0.4],
            ],
            labels: vec![0, 0, 1, 1, 2],
            model_index: 0,
        };
        let cfg = ObjectiveConfig {
            temperature: 0.7,
            ..ObjectiveConfig::default()
        };
        let (_, grads) = contrastive_loss_with_grad(&batch, &cfg).unwrap();
        let eps = 1e-6;
        for i in 0..batch.embeddings.len() {
            for k in 0..3 {
                let mut up = batch.clone();
                up.embeddings[i][k] += eps;
                let mut down = batch.clone();
                down.embeddings[i][k] -= eps;
                let fd = (contrastive_loss(&up, &cfg).unwrap() - contrastive_loss(&down, &cfg).unwrap()) / (2.0 * eps);
                assert!((fd - grads[i][k]).abs() < 1e-7, "{i},{k}: {fd} vs {}", grads[i][k]);
            }
        }
    }

    #[test]
    fn contrastive_decreases_as_positive_aligns() {
        let cfg = ObjectiveConfig::default();
        let mut prev = f64::INFINITY;
        for step in 0..5 {
            let angle = 1.5 - 0.3 * step as f64;
            let batch = ContrastiveBatch {
                embeddings: vec![vec![1.0, 0.0], vec![angle.cos(), angle.sin()], vec![0.0, -1.0]],
                labels: vec![0, 0, 1],
                model_index: 0,
            };
            let loss = contrastive_loss(&batch, &cfg).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity_similarity(&ew(&[1.0; 3]), &ew(&[1.0; 3])).unwrap(), 1.0);
        assert_eq!(diversity_similarity(&ew(&[1.0, 0.0]), &ew(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(diversity_similarity(&ew(&[0.5, 0.5]), &ew(&[0.5, 0.5])).unwrap(), 0.25);
        assert!(diversity_similarity(&ew(&[0.5]), &ew(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn total_objective_examples() {
        let cfg = ObjectiveConfig {
            alpha: 2.0,
            beta: 1.0,
            ..ObjectiveConfig::default()
        };
        // n = 1: the pair sum is empty.
        let one = total_objective(&[1.5], &[0.5], &[vec![ew(&[0.9])]], &cfg).unwrap();
        assert_eq!(one.total, 2.5);
        assert_eq!(one.diversity, 0.0);

        let erm = ObjectiveConfig {
            alpha: 0.0,
            beta: 0.0,
            ..cfg.clone()
        };
        let r = total_objective(&[1.0, 2.0], &[0.7, 0.1], &[vec![ew(&[1.0])], vec![ew(&[1.0])]], &erm).unwrap();
        assert_eq!(r.total, 3.0);

        // delta(1,2) = delta(2,1) = 0.3 from weights [0.6, 0.5] on one edge.
        let w1 = vec![ew(&[0.6])];
        let w2 = vec![ew(&[0.5])];
        let r = total_objective(&[1.0, 1.0], &[0.5, 0.5], &[w1, w2], &cfg).unwrap();
        assert!((r.diversity - 0.6).abs() < 1e-12);
        assert!((r.total - 4.6).abs() < 1e-12);
    }

    #[test]
    fn total_objective_rejects_non_finite() {
        let cfg = ObjectiveConfig::default();
        let r = total_objective(&[f64::NAN], &[0.0], &[vec![]], &cfg);
        assert!(matches!(r, Err(SugarError::NonFinite(_))));
    }

    #[test]
    fn diversity_grad_matches_finite_differences() {
        let w: Vec<Vec<f64>> = vec![vec![0.2, 0.7, 0.4], vec![0.9, 0.1, 0.5], vec![0.3, 0.3, 0.8]];
        let beta = 1.7;
        let obj = |w: &[Vec<f64>]| {
            let mut total = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        total += diversity_raw(&w[i], &w[j]).unwrap();
                    }
                }
            }
            beta * total
        };
        let refs: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
        let g = diversity_grad(1, &refs, beta, 1.0);
        for k in 0..3 {
            let mut up = w.clone();
            up[1][k] += 1e-6;
            let mut down = w.clone();
            down[1][k] -= 1e-6;
            let fd = (obj(&up) - obj(&down)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }
}
