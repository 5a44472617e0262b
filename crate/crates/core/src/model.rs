//! The invariant GNN base model: a featurizer that scores edges and a
//! classifier that predicts the label from the edge-weighted graph.
//!
//! Both halves use their own GIN-style encoder (sum aggregation with a self
//! term followed by a two-layer MLP). There is no batch normalisation, so
//! parameter averaging across models never has to reconcile running
//! statistics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SugarError};
use crate::graph::{EdgeWeights, Graph};
use crate::tensor::{Mat, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub dropout_rate: f64,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 3,
            hidden_dim: 64,
            num_classes: 3,
            feature_dim: 4,
            dropout_rate: 0.0,
            pooling: Pooling::Mean,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(SugarError::Config("num_layers and hidden_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(SugarError::Config("num_classes must be >= 2".into()));
        }
        if self.feature_dim == 0 {
            return Err(SugarError::Config("feature_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SugarError::Config("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Named parameter tensors of one base model, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

impl ParamStore {
    pub fn new(entries: Vec<(String, Mat)>) -> Self {
        let (names, tensors) = entries.into_iter().unzip();
        ParamStore { names, tensors }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Zeroed tensors with the same shapes, for gradient accumulation.
    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect()
    }

    /// SHA-256 over names and shapes; equal fingerprints mean the stores
    /// can be averaged element-wise.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update((t.rows as u64).to_le_bytes());
            h.update((t.cols as u64).to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Rounds every value to the nearest `f32`, matching what a checkpoint
    /// round trip produces.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Indices of one linear layer inside a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Encoder {
    /// Per layer: two linear maps.
    layers: Vec<(Linear, Linear)>,
}

#[derive(Debug, Clone)]
struct Layout {
    feat_encoder: Encoder,
    edge_hidden: Linear,
    edge_out: Linear,
    cls_encoder: Encoder,
    head: Linear,
}

/// `(name, rows, cols, fan_in)` for every tensor, in store order.
type Shapes = Vec<(String, usize, usize, usize)>;

fn build_layout(config: &ModelConfig) -> (Layout, Shapes) {
    let mut shapes = Vec::new();
    let mut linear = |name: String, fan_in: usize, fan_out: usize| {
        let w = shapes.len();
        shapes.push((format!("{name}.weight"), fan_in, fan_out, fan_in));
        let b = shapes.len();
        shapes.push((format!("{name}.bias"), 1, fan_out, fan_in));
        Linear { w, b }
    };
    let h = config.hidden_dim;
    let encoder = |prefix: &str, linear: &mut dyn FnMut(String, usize, usize) -> Linear| {
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.feature_dim } else { h };
                (
                    linear(format!("{prefix}.conv{l}.mlp0"), input, h),
                    linear(format!("{prefix}.conv{l}.mlp1"), h, h),
                )
            })
            .collect();
        Encoder { layers }
    };
    let feat_encoder = encoder("featurizer", &mut linear);
    let edge_hidden = linear("featurizer.edge_mlp0".into(), 2 * h, h);
    let edge_out = linear("featurizer.edge_mlp1".into(), h, 1);
    let cls_encoder = encoder("classifier", &mut linear);
    let head = linear("classifier.head".into(), h, config.num_classes);
    (
        Layout {
            feat_encoder,
            edge_hidden,
            edge_out,
            cls_encoder,
            head,
        },
        shapes,
    )
}

/// Featurizer `g` composed with classifier `f_c`.
#[derive(Debug, Clone)]
pub struct InvariantGNN {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

/// Output of a classifier pass recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierNodes {
    pub embedding: NodeId,
    pub logits: NodeId,
}

impl InvariantGNN {
    /// A freshly initialised model. Linear layers draw weights and biases
    /// from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, shapes) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shapes
            .into_iter()
            .map(|(name, rows, cols, fan_in)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
                (name, Mat::from_vec(rows, cols, data))
            })
            .collect();
        Ok(InvariantGNN {
            config,
            params: ParamStore::new(params),
            layout,
        })
    }

    /// Rebuilds a model from a stored parameter set, checking every shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let (layout, shapes) = build_layout(&config);
        if shapes.len() != params.len() {
            return Err(SugarError::ShapeMismatch {
                name: "<parameter count>".into(),
                expected: vec![shapes.len()],
                got: vec![params.len()],
            });
        }
        for ((name, rows, cols, _), (pname, t)) in shapes.iter().zip(params.names.iter().zip(&params.tensors)) {
            if name != pname || t.rows != *rows || t.cols != *cols {
                return Err(SugarError::ShapeMismatch {
                    name: name.clone(),
                    expected: vec![*rows, *cols],
                    got: vec![t.rows, t.cols],
                });
            }
        }
        Ok(InvariantGNN { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamStore) -> Result<Self> {
        InvariantGNN::from_params(self.config.clone(), params)
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        if graph.feature_dim() != self.config.feature_dim {
            return Err(SugarError::FeatureDimMismatch {
                expected: self.config.feature_dim,
                got: graph.feature_dim(),
            });
        }
        Ok(())
    }

    fn linear(&self, tape: &mut Tape<'_>, x: NodeId, lin: Linear) -> NodeId {
        let w = tape.param(lin.w);
        let b = tape.param(lin.b);
        let y = tape.matmul(x, w);
        tape.add_bias(y, b)
    }

    fn encode(
        &self,
        tape: &mut Tape<'_>,
        graph: &Graph,
        edges: &Arc<Vec<(usize, usize)>>,
        weights: NodeId,
        encoder: &Encoder,
        dropout: &mut Option<&mut ChaCha8Rng>,
    ) -> NodeId {
        let x = Mat::from_vec(graph.num_nodes(), graph.feature_dim(), graph.features().to_vec());
        let mut h = tape.constant(x);
        for &(l0, l1) in &encoder.layers {
            let agg = tape.gin_aggregate(h, weights, edges.clone());
            let z = self.linear(tape, agg, l0);
            let z = tape.relu(z);
            let z = self.linear(tape, z, l1);
            h = tape.relu(z);
            if let Some(rng) = dropout.as_deref_mut() {
                let p = self.config.dropout_rate;
                if p > 0.0 {
                    let n = tape.value(h).data.len();
                    let keep = 1.0 / (1.0 - p);
                    let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                    h = tape.mul_const(h, Arc::new(mask));
                }
            }
        }
        h
    }

    /// Records the featurizer on `tape`; returns an `[E x 1]` node of edge
    /// weights in `(0, 1)`. Passing an RNG enables dropout.
    pub fn featurize_on_tape(
        &self,
        tape: &mut Tape<'_>,
        graph: &Graph,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> NodeId {
        let edges = Arc::new(graph.edges().to_vec());
        let ones = tape.constant(Mat::from_vec(edges.len(), 1, vec![1.0; edges.len()]));
        let h = self.encode(tape, graph, &edges, ones, &self.layout.feat_encoder, &mut dropout);
        // Score both endpoint orders and average, so the weight of an
        // undirected edge does not depend on which endpoint is `src`.
        let fwd = tape.gather_concat(h, edges.clone(), false);
        let rev = tape.gather_concat(h, edges, true);
        let score = |tape: &mut Tape<'_>, x: NodeId| {
            let z = self.linear(tape, x, self.layout.edge_hidden);
            let z = tape.relu(z);
            self.linear(tape, z, self.layout.edge_out)
        };
        let a = score(tape, fwd);
        let b = score(tape, rev);
        let s = tape.add(a, b);
        let s = tape.scale(s, 0.5);
        tape.sigmoid(s)
    }

    /// Records the classifier on `tape` with per-edge message scaling
    /// `weights` (an `[E x 1]` node).
    pub fn classify_on_tape(
        &self,
        tape: &mut Tape<'_>,
        graph: &Graph,
        weights: NodeId,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> ClassifierNodes {
        let edges = Arc::new(graph.edges().to_vec());
        let h = self.encode(tape, graph, &edges, weights, &self.layout.cls_encoder, &mut dropout);
        let embedding = match self.config.pooling {
            Pooling::Mean => tape.mean_rows(h),
        };
        let logits = self.linear(tape, embedding, self.layout.head);
        ClassifierNodes { embedding, logits }
    }

    /// Eval-mode edge weights over the full graph.
    pub fn featurize(&self, graph: &Graph) -> Result<EdgeWeights> {
        self.check_graph(graph)?;
        let mut tape = Tape::new(self.params.tensors());
        let w = self.featurize_on_tape(&mut tape, graph, None);
        EdgeWeights::new(tape.value(w).data.clone())
    }

    fn classifier_pass(&self, graph: &Graph, mask: &EdgeWeights) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_graph(graph)?;
        mask.check_aligned(graph)?;
        let mut tape = Tape::new(self.params.tensors());
        let w = tape.constant(Mat::from_vec(mask.len(), 1, mask.values().to_vec()));
        let out = self.classify_on_tape(&mut tape, graph, w, None);
        Ok((
            tape.value(out.embedding).data.clone(),
            tape.value(out.logits).data.clone(),
        ))
    }

    /// Class probabilities for the graph with messages scaled by `mask`.
    pub fn classify(&self, graph: &Graph, mask: &EdgeWeights) -> Result<Vec<f64>> {
        Ok(softmax(&self.classifier_pass(graph, mask)?.1))
    }

    pub fn logits(&self, graph: &Graph, mask: &EdgeWeights) -> Result<Vec<f64>> {
        Ok(self.classifier_pass(graph, mask)?.1)
    }

    /// Pooled representation before the class head (length `hidden_dim`).
    pub fn graph_embedding(&self, graph: &Graph, mask: &EdgeWeights) -> Result<Vec<f64>> {
        Ok(self.classifier_pass(graph, mask)?.0)
    }
}

/// `n` models that all start from one random initialisation.
pub fn init_shared(n: usize, config: &ModelConfig, seed: u64) -> Result<Vec<InvariantGNN>> {
    if n == 0 {
        return Err(SugarError::Config("need at least one model".into()));
    }
    let base = InvariantGNN::new(config.clone(), seed)?;
    Ok(vec![base; n])
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}
