//! Joint training of `n` base models under the regularised objective.
//!
//! Every step, each model featurizes and classifies its own freshly sampled
//! view of every batch graph. When the diversity weight is positive the
//! featurizers also score the full graphs, and each model's featurizer is
//! pushed away from the others' weights. All models then take one Adam step
//! together. Parameters are read-only for the whole forward/backward phase
//! of a step, so all loss terms see one consistent parameter state.

pub mod checkpoint;
pub mod metrics;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    list_checkpoints, load_checkpoint, load_checkpoint_into, read_manifest, save_checkpoint, Manifest, TensorEntry,
    FORMAT_VERSION,
};
pub use metrics::{accuracy, argmax, evaluate, roc_auc, Metric};

use crate::aggregate::single_predict;
use crate::error::{Result, SugarError};
use crate::graph::{ratio_to_k, top_k_indices, Graph};
use crate::model::{init_shared, InvariantGNN, ModelConfig, ParamStore};
use crate::objective::{
    combine, contrastive_loss_with_grad, cross_entropy_with_grad, diversity_grad, diversity_raw, ContrastiveBatch,
    ObjectiveBreakdown, ObjectiveConfig,
};
use crate::seeds::derive_seed;
use crate::synthgen::DatasetSplit;
use crate::tensor::{Mat, NodeId, Tape};

const TAG_SHUFFLE: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_DROPOUT: u64 = 3;

/// Ablation variants: full method, no diversity term, no sampler, neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Ablation {
    #[default]
    #[serde(rename = "SU-A")]
    SuA,
    #[serde(rename = "SU-D")]
    SuD,
    #[serde(rename = "SU-S")]
    SuS,
    #[serde(rename = "SU-None")]
    SuNone,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::SuA, Ablation::SuD, Ablation::SuS, Ablation::SuNone];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::SuA => "SU-A",
            Ablation::SuD => "SU-D",
            Ablation::SuS => "SU-S",
            Ablation::SuNone => "SU-None",
        }
    }
}

/// What the classifier sees during training and single-model inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Featurizer weights gate the messages (the invariant model).
    #[default]
    Learned,
    /// All edges with weight 1; the featurizer is unused. This is the plain
    /// ERM graph classifier.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Fraction of edges kept per sampled view.
    pub ratio: f64,
    pub enabled: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            ratio: 0.9,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_models: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub objective: ObjectiveConfig,
    pub sampler: SamplerConfig,
    /// Edge budget ratio of an extracted subgraph.
    pub s_c: f64,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub model: ModelConfig,
    pub metric: Metric,
    pub mask_mode: MaskMode,
    /// Restrict the training mask to the top `s_c` fraction of the soft
    /// weights (zero elsewhere), matching the hard top-k used at inference.
    pub train_topk: bool,
    /// Training graphs used for the end-of-training diversity statistic.
    pub diversity_probe: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_models: 10,
            epochs: 40,
            batch_size: 128,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
            objective: ObjectiveConfig::default(),
            sampler: SamplerConfig::default(),
            s_c: 0.5,
            seeds: vec![1, 2, 3, 4, 5],
            ablation: Ablation::SuA,
            model: ModelConfig::default(),
            metric: Metric::Accuracy,
            mask_mode: MaskMode::Learned,
            train_topk: true,
            diversity_probe: 256,
        }
    }
}

impl TrainConfig {
    /// Config with the ablation applied: SU-D zeroes beta, SU-S disables the
    /// sampler, SU-None does both.
    pub fn effective(&self) -> TrainConfig {
        let mut c = self.clone();
        if matches!(self.ablation, Ablation::SuD | Ablation::SuNone) {
            c.objective.beta = 0.0;
        }
        if matches!(self.ablation, Ablation::SuS | Ablation::SuNone) {
            c.sampler.enabled = false;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(SugarError::Config("n_models must be >= 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(SugarError::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(SugarError::Config("lr must be > 0".into()));
        }
        if !(self.sampler.ratio > 0.0 && self.sampler.ratio <= 1.0) {
            return Err(SugarError::InvalidRatio(self.sampler.ratio));
        }
        if !(self.s_c > 0.0 && self.s_c <= 1.0) {
            return Err(SugarError::InvalidRatio(self.s_c));
        }
        self.objective.validate()?;
        self.model.validate()
    }

    /// Edge budget for single-model inference, or `None` in full-graph mode.
    pub fn inference_ratio(&self) -> Option<f64> {
        match self.mask_mode {
            MaskMode::Learned => Some(self.s_c),
            MaskMode::Full => None,
        }
    }
}

/// Uniformly keeps `ceil(r * |E|)` edges (without replacement, original
/// order preserved) and all nodes.
pub fn sample_subgraph(graph: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let k = ratio_to_k(ratio, graph.num_edges())?;
    if k == graph.num_edges() {
        return Ok(graph.clone());
    }
    let mut keep = rand::seq::index::sample(rng, graph.num_edges(), k).into_vec();
    keep.sort_unstable();
    graph.edge_subgraph(&keep)
}

/// One line of `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub risk: Vec<f64>,
    pub contrastive: Vec<f64>,
    /// Ordered-pair diversity sum; absent when the term is inactive.
    pub diversity: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_metric: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| SugarError::io(path, e))?;
        f.write_all(&out).map_err(|e| SugarError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Validation-best parameters of every model, rounded to `f32`.
    pub models: Vec<InvariantGNN>,
    pub best_epochs: Vec<usize>,
    pub best_val: Vec<f64>,
    /// Shared initialisation all models started from.
    pub init: ParamStore,
    pub log: TrainingLog,
    /// Mean pairwise diversity similarity of the last-epoch featurizers on
    /// the probe graphs.
    pub final_diversity: f64,
    pub seed: u64,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<Mat>>,
    v: Vec<Vec<Mat>>,
}

impl Adam {
    fn new(models: &[InvariantGNN], lr: f64) -> Self {
        let zeros: Vec<Vec<Mat>> = models.iter().map(|m| m.params().zeros_like()).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, models: &mut [InvariantGNN], grads: &[Vec<Mat>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, model) in models.iter_mut().enumerate() {
            for (p, param) in model.params_mut().tensors_mut().iter_mut().enumerate() {
                let g = &grads[i][p].data;
                let m = &mut self.m[i][p].data;
                let v = &mut self.v[i][p].data;
                for k in 0..param.data.len() {
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                    let mhat = m[k] / c1;
                    let vhat = v[k] / c2;
                    param.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// Per-model result of one step's forward/backward phase.
struct ModelStep {
    risk: f64,
    contrastive: f64,
    grads: Vec<Mat>,
}

struct GraphPass<'p> {
    tape: Tape<'p>,
    logits: NodeId,
    embedding: NodeId,
    full_weights: Option<NodeId>,
}

fn topk_mask(values: &[f64], ratio: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let k = ratio_to_k(ratio, values.len())?;
    let mut mask = vec![0.0; values.len()];
    for i in top_k_indices(values, k)? {
        mask[i] = 1.0;
    }
    Ok(mask)
}

/// Records one training forward pass of `model` on `graph`.
fn forward_train<'p>(
    model: &'p InvariantGNN,
    config: &TrainConfig,
    graph: &Graph,
    seed: u64,
    path: [u64; 4],
    with_full: bool,
) -> Result<GraphPass<'p>> {
    let mut tape = Tape::new(model.params().tensors());
    let view = if config.sampler.enabled && graph.num_edges() > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SAMPLE, path[0], path[1], path[2], path[3]]));
        sample_subgraph(graph, config.sampler.ratio, &mut rng)?
    } else {
        graph.clone()
    };
    let mut dropout = (config.model.dropout_rate > 0.0)
        .then(|| ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_DROPOUT, path[0], path[1], path[2], path[3]])));
    let weights = match config.mask_mode {
        MaskMode::Learned => {
            let w = model.featurize_on_tape(&mut tape, &view, dropout.as_mut());
            if config.train_topk && view.num_edges() > 0 {
                let mask = topk_mask(&tape.value(w).data, config.s_c)?;
                tape.mul_const(w, Arc::new(mask))
            } else {
                w
            }
        }
        MaskMode::Full => tape.constant(Mat::from_vec(view.num_edges(), 1, vec![1.0; view.num_edges()])),
    };
    let out = model.classify_on_tape(&mut tape, &view, weights, dropout.as_mut());
    // The diversity term scores the full graph in eval mode so its value
    // matches what the other models see as constants.
    let full_weights = with_full.then(|| model.featurize_on_tape(&mut tape, graph, None));
    Ok(GraphPass {
        tape,
        logits: out.logits,
        embedding: out.embedding,
        full_weights,
    })
}

fn model_step(
    index: usize,
    model: &InvariantGNN,
    config: &TrainConfig,
    batch: &[&Graph],
    full_weights: &[Vec<Vec<f64>>],
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<ModelStep> {
    let diversity_on = !full_weights.is_empty();
    let passes = batch
        .iter()
        .enumerate()
        .map(|(g, graph)| {
            forward_train(
                model,
                config,
                graph,
                seed,
                [epoch as u64, step as u64, index as u64, g as u64],
                diversity_on,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let inv_b = 1.0 / batch.len() as f64;
    let mut risk = 0.0;
    let mut logit_grads = Vec::with_capacity(batch.len());
    for (pass, graph) in passes.iter().zip(batch) {
        let (l, mut g) = cross_entropy_with_grad(&pass.tape.value(pass.logits).data, graph.label());
        risk += l * inv_b;
        g.iter_mut().for_each(|x| *x *= inv_b);
        logit_grads.push(Mat::from_vec(1, g.len(), g));
    }

    let alpha = config.objective.alpha;
    let (contrastive, emb_grads) = if alpha > 0.0 {
        let cb = ContrastiveBatch {
            embeddings: passes.iter().map(|p| p.tape.value(p.embedding).data.clone()).collect(),
            labels: batch.iter().map(|g| g.label()).collect(),
            model_index: index,
        };
        let (l, grads) = contrastive_loss_with_grad(&cb, &config.objective)?;
        let grads: Vec<Mat> = grads
            .into_iter()
            .map(|g| Mat::from_vec(1, g.len(), g.into_iter().map(|x| x * alpha).collect()))
            .collect();
        (l, Some(grads))
    } else {
        (0.0, None)
    };

    let mut grads = model.params().zeros_like();
    for (g, pass) in passes.iter().enumerate() {
        let mut seeds: Vec<(NodeId, &Mat)> = vec![(pass.logits, &logit_grads[g])];
        if let Some(eg) = &emb_grads {
            seeds.push((pass.embedding, &eg[g]));
        }
        let div_seed;
        if let Some(fw) = pass.full_weights {
            let per_model: Vec<&[f64]> = full_weights.iter().map(|m| m[g].as_slice()).collect();
            let dg = diversity_grad(index, &per_model, config.objective.beta, inv_b);
            div_seed = Mat::from_vec(dg.len(), 1, dg);
            seeds.push((fw, &div_seed));
        }
        pass.tape.backward(&seeds, &mut grads);
    }
    Ok(ModelStep {
        risk,
        contrastive,
        grads,
    })
}

fn batch_diversity(full_weights: &[Vec<Vec<f64>>]) -> Result<f64> {
    let n = full_weights.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let graphs = full_weights[i].len();
            let mut sum = 0.0;
            for g in 0..graphs {
                sum += diversity_raw(&full_weights[i][g], &full_weights[j][g])?;
            }
            total += sum / graphs as f64;
        }
    }
    Ok(total)
}

/// Mean over ordered featurizer pairs and probe graphs of the diversity
/// similarity, in eval mode. Zero for a single model.
pub fn mean_pairwise_similarity(models: &[InvariantGNN], graphs: &[Graph]) -> Result<f64> {
    let n = models.len();
    if n < 2 || graphs.is_empty() {
        return Ok(0.0);
    }
    let weights = models
        .par_iter()
        .map(|m| {
            graphs
                .iter()
                .map(|g| m.featurize(g).map(|w| w.values().to_vec()))
                .collect()
        })
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
    Ok(batch_diversity(&weights)? / (n * (n - 1)) as f64)
}

/// Eval-mode metric of one model on a split, using its own top-k subgraph
/// (or the full graph in [`MaskMode::Full`]).
pub fn validate(model: &InvariantGNN, split: &[Graph], inference_ratio: Option<f64>, metric: Metric) -> Result<f64> {
    if split.is_empty() {
        return Err(SugarError::Empty("evaluation split"));
    }
    let probs = split
        .iter()
        .map(|g| single_predict(model, g, inference_ratio).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = split.iter().map(Graph::label).collect();
    evaluate(&probs, &labels, metric)
}

/// Objective value and per-model parameter gradients of one training step.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub breakdown: ObjectiveBreakdown,
    /// `None` when the diversity term is inactive.
    pub diversity: Option<f64>,
    /// `grads[i][p]` matches `models[i].params().tensors()[p]`.
    pub grads: Vec<Vec<Mat>>,
}

/// Forward and backward pass of every model on `batch`, exactly as one
/// training step computes them before the optimizer update. `epoch` and
/// `step` select the sampler and dropout streams.
pub fn step_gradients(
    models: &[InvariantGNN],
    config: &TrainConfig,
    batch: &[&Graph],
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<StepGradients> {
    let config = config.effective();
    if batch.is_empty() {
        return Err(SugarError::EmptyBatch);
    }
    let diversity_on = config.objective.beta > 0.0 && models.len() > 1 && config.mask_mode == MaskMode::Learned;
    let full_weights: Vec<Vec<Vec<f64>>> = if diversity_on {
        models
            .par_iter()
            .map(|m| {
                batch
                    .iter()
                    .map(|g| m.featurize(g).map(|w| w.values().to_vec()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let results = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| model_step(i, m, &config, batch, &full_weights, seed, epoch, step))
        .collect::<Result<Vec<_>>>()?;

    let risks: Vec<f64> = results.iter().map(|r| r.risk).collect();
    let cons: Vec<f64> = results.iter().map(|r| r.contrastive).collect();
    let diversity = if diversity_on {
        Some(batch_diversity(&full_weights)?)
    } else {
        None
    };
    let breakdown =
        combine(&risks, &cons, diversity.unwrap_or(0.0), &config.objective).map_err(|e| SugarError::Divergence {
            epoch,
            step,
            detail: format!("{e}; risk={risks:?} contrastive={cons:?} diversity={diversity:?}"),
        })?;
    let grads: Vec<Vec<Mat>> = results.into_iter().map(|r| r.grads).collect();
    if grads.iter().flatten().any(|g| g.data.iter().any(|x| !x.is_finite())) {
        return Err(SugarError::Divergence {
            epoch,
            step,
            detail: "non-finite gradient".into(),
        });
    }
    Ok(StepGradients {
        breakdown,
        diversity,
        grads,
    })
}

/// Trains `config.n_models` models jointly from one shared initialisation.
/// Returns each model's validation-best parameters.
pub fn train_sugar(config: &TrainConfig, data: &DatasetSplit, seed: u64) -> Result<TrainOutcome> {
    let config = config.effective();
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(SugarError::Empty("train or validation split"));
    }
    for g in data.train.iter().chain(&data.val).chain(&data.test) {
        if g.feature_dim() != config.model.feature_dim {
            return Err(SugarError::FeatureDimMismatch {
                expected: config.model.feature_dim,
                got: g.feature_dim(),
            });
        }
        if g.label() >= config.model.num_classes {
            return Err(SugarError::Config(format!(
                "label {} >= num_classes {}",
                g.label(),
                config.model.num_classes
            )));
        }
    }

    let mut models = init_shared(config.n_models, &config.model, seed)?;
    let init = models[0].params().clone();
    let mut adam = Adam::new(&models, config.lr);

    let mut log = TrainingLog::default();
    let mut best: Vec<(f64, usize, ParamStore)> = vec![(f64::NEG_INFINITY, 0, init.clone()); config.n_models];
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut global_step = 0;

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &[TAG_SHUFFLE, epoch as u64],
        )));
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Graph> = chunk.iter().map(|&i| &data.train[i]).collect();
            let StepGradients {
                breakdown,
                diversity,
                grads,
            } = step_gradients(&models, &config, &batch, seed, epoch, step)?;
            adam.step(&mut models, &grads);
            log.steps.push(StepRecord {
                epoch,
                step: global_step,
                risk: breakdown.risk,
                contrastive: breakdown.contrastive,
                diversity,
                total: breakdown.total,
            });
            global_step += 1;
        }

        let ratio = config.inference_ratio();
        let val = models
            .par_iter()
            .map(|m| validate(m, &data.val, ratio, config.metric))
            .collect::<Result<Vec<_>>>()?;
        for (i, &v) in val.iter().enumerate() {
            if v > best[i].0 {
                best[i] = (v, epoch, models[i].params().clone());
            }
        }
        log::debug!("epoch {epoch}: val {val:?}");
        log.epochs.push(EpochRecord { epoch, val_metric: val });
    }

    let probe = &data.train[..config.diversity_probe.min(data.train.len())];
    let final_diversity = mean_pairwise_similarity(&models, probe)?;

    let mut out_models = Vec::with_capacity(config.n_models);
    let mut best_epochs = Vec::with_capacity(config.n_models);
    let mut best_val = Vec::with_capacity(config.n_models);
    for (v, epoch, mut params) in best {
        params.round_to_f32();
        out_models.push(InvariantGNN::from_params(config.model.clone(), params)?);
        best_epochs.push(epoch);
        best_val.push(v);
    }
    Ok(TrainOutcome {
        models: out_models,
        best_epochs,
        best_val,
        init,
        log,
        final_diversity,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub index: usize,
    pub best_epoch: usize,
    pub val_metric: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub metric: Metric,
    pub final_diversity: f64,
    pub models: Vec<ModelSummary>,
}

/// Writes `checkpoints/model_{i}.bin|json`, `log.jsonl` and `summary.json`.
pub fn write_outcome(
    outcome: &TrainOutcome,
    config: &TrainConfig,
    data: &DatasetSplit,
    dir: &Path,
) -> Result<TrainSummary> {
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| SugarError::io(&ckpt_dir, e))?;
    for (i, m) in outcome.models.iter().enumerate() {
        save_checkpoint(m, outcome.seed, &ckpt_dir.join(format!("model_{i}.bin")))?;
    }
    outcome.log.write_jsonl(&dir.join("log.jsonl"))?;
    let ratio = config.inference_ratio();
    let mut models = Vec::with_capacity(outcome.models.len());
    for (i, m) in outcome.models.iter().enumerate() {
        let test_metric = if data.test.is_empty() {
            f64::NAN
        } else {
            validate(m, &data.test, ratio, config.metric)?
        };
        models.push(ModelSummary {
            index: i,
            best_epoch: outcome.best_epochs[i],
            val_metric: outcome.best_val[i],
            test_metric,
        });
    }
    let summary = TrainSummary {
        seed: outcome.seed,
        metric: config.metric,
        final_diversity: outcome.final_diversity,
        models,
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| SugarError::io(&path, e))?;
    Ok(summary)
}
