//! Post-training aggregation of base models.
//!
//! ENS: every featurizer scores the full graph, the weight sets are merged
//! (mean or max) and cut to the top `k` edges, then every classifier scores
//! that one merged hard-masked subgraph and the scores are voted on.
//! WA: parameters of shared-initialisation models are averaged and the
//! result is used as a single model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};
use crate::graph::{ratio_to_k, selection_to_hard_mask, top_k_edges, EdgeWeights, Graph, SubgraphSelection};
use crate::model::{InvariantGNN, ParamStore};
use crate::tensor::Mat;
use crate::trainer::{argmax, evaluate, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Ens,
    Wa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Merge {
    #[default]
    #[serde(alias = "avg")]
    Average,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    #[default]
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Uniform,
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub mode: AggregationMode,
    /// ENS only.
    pub merge: Merge,
    /// ENS only.
    pub vote: Vote,
    pub selection: Selection,
    /// Edge budget ratio `s_c`.
    pub k_ratio: f64,
    pub metric: Metric,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            mode: AggregationMode::Ens,
            merge: Merge::Average,
            vote: Vote::Soft,
            selection: Selection::Greedy,
            k_ratio: 0.5,
            metric: Metric::Accuracy,
        }
    }
}

fn check_sets(sets: &[EdgeWeights]) -> Result<usize> {
    let first = sets.first().ok_or(SugarError::Empty("edge weight sets"))?;
    for s in sets {
        if s.len() != first.len() {
            return Err(SugarError::MisalignedWeights {
                expected: first.len(),
                got: s.len(),
            });
        }
    }
    Ok(first.len())
}

/// Element-wise mean of aligned weight sets.
pub fn merge_average(sets: &[EdgeWeights]) -> Result<EdgeWeights> {
    let len = check_sets(sets)?;
    let mut acc = vec![0.0; len];
    for s in sets {
        for (a, v) in acc.iter_mut().zip(s.values()) {
            *a += v;
        }
    }
    let n = sets.len() as f64;
    EdgeWeights::new(acc.into_iter().map(|a| (a / n).clamp(0.0, 1.0)).collect())
}

/// Element-wise maximum of aligned weight sets.
pub fn merge_max(sets: &[EdgeWeights]) -> Result<EdgeWeights> {
    let len = check_sets(sets)?;
    let mut acc = vec![f64::NEG_INFINITY; len];
    for s in sets {
        for (a, &v) in acc.iter_mut().zip(s.values()) {
            *a = a.max(v);
        }
    }
    EdgeWeights::new(acc)
}

pub fn merge(sets: &[EdgeWeights], how: Merge) -> Result<EdgeWeights> {
    match how {
        Merge::Average => merge_average(sets),
        Merge::Max => merge_max(sets),
    }
}

fn column_means(probs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = probs.first().ok_or(SugarError::Empty("probability matrix"))?;
    let mut means = vec![0.0; first.len()];
    for row in probs {
        if row.len() != means.len() {
            return Err(SugarError::MisalignedWeights {
                expected: means.len(),
                got: row.len(),
            });
        }
        for (m, p) in means.iter_mut().zip(row) {
            *m += p;
        }
    }
    let n = probs.len() as f64;
    means.iter_mut().for_each(|m| *m /= n);
    Ok(means)
}

/// Argmax of the per-class mean probability; ties go to the smaller class.
pub fn soft_vote(probs: &[Vec<f64>]) -> Result<usize> {
    Ok(argmax(&column_means(probs)?))
}

/// Majority over per-row argmaxes. A tie between the most-voted classes is
/// settled by the soft vote restricted to those classes.
pub fn hard_vote(probs: &[Vec<f64>]) -> Result<usize> {
    let means = column_means(probs)?;
    let mut counts = vec![0usize; means.len()];
    for row in probs {
        counts[argmax(row)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&0);
    let tied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let mut best = tied[0];
    for &c in &tied[1..] {
        if means[c] > means[best] {
            best = c;
        }
    }
    Ok(best)
}

pub fn vote(probs: &[Vec<f64>], how: Vote) -> Result<usize> {
    match how {
        Vote::Soft => soft_vote(probs),
        Vote::Hard => hard_vote(probs),
    }
}

/// Prediction of one model on its own top-`k` subgraph, or on the full
/// graph when `ratio` is `None`.
pub fn single_predict(
    model: &InvariantGNN,
    graph: &Graph,
    ratio: Option<f64>,
) -> Result<(Vec<f64>, Option<SubgraphSelection>)> {
    match ratio {
        Some(r) if graph.num_edges() > 0 => {
            let weights = model.featurize(graph)?;
            let sel = top_k_edges(&weights, ratio_to_k(r, graph.num_edges())?)?;
            let mask = selection_to_hard_mask(&sel, graph.num_edges())?;
            Ok((model.classify(graph, &mask)?, Some(sel)))
        }
        _ => Ok((model.classify(graph, &EdgeWeights::ones(graph.num_edges()))?, None)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsPrediction {
    pub class: usize,
    /// Merged selection; `None` only for edgeless graphs.
    pub merged: Option<SubgraphSelection>,
    /// Each featurizer's own top-`k` selection.
    pub per_model: Vec<SubgraphSelection>,
    /// Each classifier's probabilities on the merged subgraph.
    pub probs: Vec<Vec<f64>>,
}

fn ens_from_weights(
    graph: &Graph,
    models: &[&InvariantGNN],
    weights: &[EdgeWeights],
    config: &AggregationConfig,
) -> Result<EnsPrediction> {
    let m = graph.num_edges();
    let (mask, merged, per_model) = if m == 0 {
        (EdgeWeights::zeros(0), None, Vec::new())
    } else {
        let k = ratio_to_k(config.k_ratio, m)?;
        let per_model = weights.iter().map(|w| top_k_edges(w, k)).collect::<Result<Vec<_>>>()?;
        let merged = top_k_edges(&merge(weights, config.merge)?, k)?;
        (selection_to_hard_mask(&merged, m)?, Some(merged), per_model)
    };
    let probs = models
        .iter()
        .map(|model| model.classify(graph, &mask))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsPrediction {
        class: vote(&probs, config.vote)?,
        merged,
        per_model,
        probs,
    })
}

/// Three-stage ensemble prediction on one graph.
pub fn ens_predict(graph: &Graph, models: &[&InvariantGNN], config: &AggregationConfig) -> Result<EnsPrediction> {
    if models.is_empty() {
        return Err(SugarError::Empty("model list"));
    }
    let weights = models.iter().map(|m| m.featurize(graph)).collect::<Result<Vec<_>>>()?;
    ens_from_weights(graph, models, &weights, config)
}

/// Element-wise mean of every named tensor. All stores must share one
/// fingerprint.
pub fn weight_average(stores: &[&ParamStore]) -> Result<ParamStore> {
    let first = stores.first().ok_or(SugarError::Empty("parameter stores"))?;
    let fp = first.fingerprint();
    for s in &stores[1..] {
        let other = s.fingerprint();
        if other != fp {
            return Err(SugarError::FingerprintMismatch(fp, other));
        }
    }
    let n = stores.len() as f64;
    let tensors = first
        .tensors()
        .iter()
        .enumerate()
        .map(|(p, t)| {
            let mut acc = Mat::zeros(t.rows, t.cols);
            for s in stores {
                acc.add_assign(&s.tensors()[p]);
            }
            acc.data.iter_mut().for_each(|x| *x /= n);
            acc
        })
        .collect::<Vec<_>>();
    Ok(ParamStore::new(first.names().iter().cloned().zip(tensors).collect()))
}

/// Model built from the average of `models`' parameters.
pub fn weight_averaged_model(models: &[&InvariantGNN]) -> Result<InvariantGNN> {
    let first = models.first().ok_or(SugarError::Empty("model list"))?;
    let stores: Vec<&ParamStore> = models.iter().map(|m| m.params()).collect();
    first.with_params(weight_average(&stores)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub candidate: usize,
    pub candidate_metric: f64,
    /// Aggregate metric with the candidate added.
    pub aggregate_metric: f64,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Admitted model indices in admission order.
    pub chosen_indices: Vec<usize>,
    pub trace: Vec<SelectionStep>,
    /// Validation metric of the final aggregate.
    pub metric: Option<f64>,
}

pub fn select_uniform(count: usize) -> Result<SelectionResult> {
    if count == 0 {
        return Err(SugarError::Empty("checkpoint list"));
    }
    Ok(SelectionResult {
        chosen_indices: (0..count).collect(),
        trace: Vec::new(),
        metric: None,
    })
}

/// Precomputed featurizer outputs for repeated ENS evaluation of subsets.
pub struct EnsCache<'a> {
    models: &'a [InvariantGNN],
    split: &'a [Graph],
    /// `weights[i][g]`
    weights: Vec<Vec<EdgeWeights>>,
}

impl<'a> EnsCache<'a> {
    pub fn new(models: &'a [InvariantGNN], split: &'a [Graph]) -> Result<Self> {
        let weights = models
            .par_iter()
            .map(|m| split.iter().map(|g| m.featurize(g)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsCache { models, split, weights })
    }

    pub fn predict(&self, subset: &[usize], config: &AggregationConfig) -> Result<Vec<EnsPrediction>> {
        let members: Vec<&InvariantGNN> = subset.iter().map(|&i| &self.models[i]).collect();
        (0..self.split.len())
            .into_par_iter()
            .map(|g| {
                let w: Vec<EdgeWeights> = subset.iter().map(|&i| self.weights[i][g].clone()).collect();
                ens_from_weights(&self.split[g], &members, &w, config)
            })
            .collect()
    }

    pub fn metric(&self, subset: &[usize], config: &AggregationConfig) -> Result<f64> {
        let preds = self.predict(subset, config)?;
        let probs: Vec<Vec<f64>> = match config.metric {
            Metric::Accuracy => preds
                .iter()
                .map(|p| {
                    let mut one_hot = vec![0.0; p.probs[0].len()];
                    one_hot[p.class] = 1.0;
                    one_hot
                })
                .collect(),
            Metric::RocAuc => preds.iter().map(|p| column_means(&p.probs)).collect::<Result<_>>()?,
        };
        let labels: Vec<usize> = self.split.iter().map(Graph::label).collect();
        evaluate(&probs, &labels, config.metric)
    }
}

fn wa_metric(models: &[InvariantGNN], subset: &[usize], split: &[Graph], config: &AggregationConfig) -> Result<f64> {
    let members: Vec<&InvariantGNN> = subset.iter().map(|&i| &models[i]).collect();
    let avg = weight_averaged_model(&members)?;
    crate::trainer::validate(&avg, split, Some(config.k_ratio), config.metric)
}

/// Validation metric of the aggregate over `subset` under `config.mode`.
pub fn aggregate_metric(
    models: &[InvariantGNN],
    subset: &[usize],
    split: &[Graph],
    config: &AggregationConfig,
) -> Result<f64> {
    match config.mode {
        AggregationMode::Ens => EnsCache::new(models, split)?.metric(subset, config),
        AggregationMode::Wa => wa_metric(models, subset, split, config),
    }
}

/// Greedy selection: rank models by their own validation metric, then admit
/// each in rank order iff the aggregate with it is at least as good as the
/// aggregate without it. The empty aggregate scores minus infinity, so the
/// top-ranked model is always admitted.
pub fn select_greedy(models: &[InvariantGNN], val: &[Graph], config: &AggregationConfig) -> Result<SelectionResult> {
    if models.is_empty() {
        return Err(SugarError::Empty("checkpoint list"));
    }
    if val.is_empty() {
        return Err(SugarError::Empty("validation split"));
    }
    let cache = match config.mode {
        AggregationMode::Ens => Some(EnsCache::new(models, val)?),
        AggregationMode::Wa => None,
    };
    let eval = |subset: &[usize]| -> Result<f64> {
        match &cache {
            Some(c) => c.metric(subset, config),
            None => wa_metric(models, subset, val, config),
        }
    };
    let individual = (0..models.len()).map(|i| eval(&[i])).collect::<Result<Vec<_>>>()?;
    let mut rank: Vec<usize> = (0..models.len()).collect();
    rank.sort_by(|&a, &b| individual[b].total_cmp(&individual[a]).then(a.cmp(&b)));

    let mut chosen = Vec::new();
    let mut current = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(models.len());
    for &i in &rank {
        let mut candidate = chosen.clone();
        candidate.push(i);
        let score = if chosen.is_empty() {
            individual[i]
        } else {
            eval(&candidate)?
        };
        let admitted = score >= current;
        if admitted {
            chosen = candidate;
            current = score;
        }
        trace.push(SelectionStep {
            candidate: i,
            candidate_metric: individual[i],
            aggregate_metric: score,
            admitted,
        });
    }
    let best_single = individual[rank[0]];
    if current < best_single {
        return Err(SugarError::Invariant(format!(
            "greedy aggregate {current} fell below best single model {best_single}"
        )));
    }
    Ok(SelectionResult {
        chosen_indices: chosen,
        trace,
        metric: Some(current),
    })
}
