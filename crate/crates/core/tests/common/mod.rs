#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sugar::graph::{ratio_to_k, top_k_edges};
use sugar::objective::ObjectiveConfig;
use sugar::objective::{contrastive_loss, total_objective, ContrastiveBatch};
use sugar::trainer::{step_gradients, MaskMode, SamplerConfig, TrainConfig};
use sugar::{EdgeWeights, Graph, InvariantGNN, ModelConfig};

/// Random connected graph: a spanning path plus `extra` chords.
pub fn toy_graph(nodes: usize, extra: usize, feature_dim: usize, label: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..nodes).map(|v| (v - 1, v)).collect();
    let mut tries = 0;
    while edges.len() < nodes - 1 + extra && tries < 1000 {
        tries += 1;
        let u = rng.gen_range(0..nodes);
        let v = rng.gen_range(0..nodes);
        let e = (u.min(v), u.max(v));
        if u != v && !edges.contains(&e) {
            edges.push(e);
        }
    }
    let features = (0..nodes)
        .map(|_| (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Graph::new(nodes, edges, features, label, None, None).unwrap()
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 5,
        num_classes: 3,
        feature_dim: 3,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    }
}

/// Training mask as an external reader would build it: eval-mode weights,
/// zeroed outside the top `s_c` fraction.
pub fn oracle_mask(model: &InvariantGNN, graph: &Graph, config: &TrainConfig) -> EdgeWeights {
    match config.mask_mode {
        MaskMode::Full => EdgeWeights::ones(graph.num_edges()),
        MaskMode::Learned => {
            let w = model.featurize(graph).unwrap();
            if !config.train_topk {
                return w;
            }
            let k = ratio_to_k(config.s_c, graph.num_edges()).unwrap();
            let sel = top_k_edges(&w, k).unwrap();
            let masked = w
                .values()
                .iter()
                .enumerate()
                .map(|(i, &x)| if sel.contains(i) { x } else { 0.0 })
                .collect();
            EdgeWeights::new(masked).unwrap()
        }
    }
}

/// Joint objective on one batch recomputed from public forward passes only
/// (sampler and dropout must be off).
pub fn oracle_objective(models: &[InvariantGNN], config: &TrainConfig, batch: &[Graph]) -> f64 {
    assert!(!config.sampler.enabled && config.model.dropout_rate == 0.0);
    let mut risks = Vec::new();
    let mut cons = Vec::new();
    let mut weights = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let mut risk = 0.0;
        let mut embeddings = Vec::new();
        for g in batch {
            let mask = oracle_mask(m, g, config);
            let p = m.classify(g, &mask).unwrap();
            risk -= p[g.label()].ln();
            embeddings.push(m.graph_embedding(g, &mask).unwrap());
        }
        risks.push(risk / batch.len() as f64);
        let cb = ContrastiveBatch {
            embeddings,
            labels: batch.iter().map(Graph::label).collect(),
            model_index: i,
        };
        cons.push(if config.objective.alpha > 0.0 {
            contrastive_loss(&cb, &config.objective).unwrap()
        } else {
            0.0
        });
        weights.push(batch.iter().map(|g| m.featurize(g).unwrap()).collect());
    }
    let mut obj = config.objective.clone();
    if models.len() < 2 || config.mask_mode == MaskMode::Full {
        obj.beta = 0.0;
    }
    total_objective(&risks, &cons, &weights, &obj).unwrap().total
}

/// Relative error with a floor on the denominator, so entries that are
/// zero on both sides compare as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central differences of `f` over every scalar parameter of every model.
pub fn central_differences(
    models: &[InvariantGNN],
    eps: f64,
    f: impl Fn(&[InvariantGNN]) -> f64,
) -> Vec<Vec<Vec<f64>>> {
    let mut work = models.to_vec();
    let mut out = Vec::new();
    for i in 0..models.len() {
        let mut per_param = Vec::new();
        for p in 0..models[i].params().len() {
            let len = models[i].params().tensors()[p].data.len();
            let mut g = vec![0.0; len];
            for (k, gk) in g.iter_mut().enumerate() {
                let orig = work[i].params().tensors()[p].data[k];
                work[i].params_mut().tensors_mut()[p].data[k] = orig + eps;
                let plus = f(&work);
                work[i].params_mut().tensors_mut()[p].data[k] = orig - eps;
                let minus = f(&work);
                work[i].params_mut().tensors_mut()[p].data[k] = orig;
                *gk = (plus - minus) / (2.0 * eps);
            }
            per_param.push(g);
        }
        out.push(per_param);
    }
    out
}

pub fn toy_batch() -> Vec<Graph> {
    [0, 0, 1, 2, 1, 2]
        .iter()
        .enumerate()
        .map(|(i, &y)| toy_graph(6, 2 + i % 3, 3, y, 100 + i as u64))
        .collect()
}

pub fn grad_config(alpha: f64, beta: f64) -> TrainConfig {
    TrainConfig {
        n_models: 2,
        objective: ObjectiveConfig {
            alpha,
            beta,
            temperature: 0.5,
            ..ObjectiveConfig::default()
        },
        sampler: SamplerConfig {
            enabled: false,
            ..SamplerConfig::default()
        },
        model: tiny_model_config(),
        ..TrainConfig::default()
    }
}

pub fn max_rel_error(models: &[InvariantGNN], config: &TrainConfig, batch: &[Graph]) -> f64 {
    let refs: Vec<&Graph> = batch.iter().collect();
    let analytic = step_gradients(models, config, &refs, 7, 0, 0).unwrap();
    let value = oracle_objective(models, config, batch);
    assert!(rel_err(analytic.breakdown.total, value) < 1e-12);
    let numeric = central_differences(models, 1e-4, |m| oracle_objective(m, config, batch));
    let mut worst: f64 = 0.0;
    for (i, per_param) in numeric.iter().enumerate() {
        for (p, g) in per_param.iter().enumerate() {
            for (k, &n) in g.iter().enumerate() {
                worst = worst.max(rel_err(analytic.grads[i][p].data[k], n));
            }
        }
    }
    worst
}

pub fn two_models() -> Vec<InvariantGNN> {
    vec![
        InvariantGNN::new(tiny_model_config(), 11).unwrap(),
        InvariantGNN::new(tiny_model_config(), 12).unwrap(),
    ]
}
