//! Experiment orchestration, report tables, DOT export of edge weights and a
//! discrete information-theory toolkit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{select_greedy, select_uniform, AggregationConfig, AggregationMode, EnsCache, Selection};
use crate::error::{Result, SugarError};
use crate::graph::{EdgeWeights, Graph, SubgraphSelection};
use crate::model::InvariantGNN;
use crate::synthgen::{gen_dataset, DatasetSplit, SynthConfig};
use crate::trainer::{train_sugar, validate, Ablation, MaskMode, Metric, TrainConfig, TrainOutcome};

pub const ROW_ERM: &str = "ERM-baseline";
pub const ROW_BEST_SINGLE: &str = "best-single";
pub const ROW_MEAN_SINGLE: &str = "mean-single";
pub const ROW_ENS: &str = "SuGAr(ENS)";
pub const ROW_WA: &str = "SuGAr(WA)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthConfig),
    /// Directory with `train/val/test.jsonl`.
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Column label in report tables.
    #[serde(default = "default_name")]
    pub name: String,
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub aggregate: AggregationConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Also train every ablation variant and report its ENS metric.
    #[serde(default)]
    pub ablation_grid: bool,
    /// Train the full-graph ERM baseline.
    #[serde(default = "yes")]
    pub erm_baseline: bool,
}

fn default_name() -> String {
    "experiment".into()
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(SugarError::Config("seeds must be nonempty".into()));
        }
        match &self.data {
            DataSource::Synth(c) => c.validate()?,
            DataSource::Dir(dir) => {
                for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
                    if !dir.join(f).is_file() {
                        return Err(SugarError::Config(format!("missing {}", dir.join(f).display())));
                    }
                }
            }
        }
        if !(self.aggregate.k_ratio > 0.0 && self.aggregate.k_ratio <= 1.0) {
            return Err(SugarError::InvalidRatio(self.aggregate.k_ratio));
        }
        self.train.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SugarError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SugarError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything measured for one seed. Metrics are on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub erm: Option<f64>,
    pub best_single: f64,
    pub mean_single: f64,
    pub single: Vec<f64>,
    pub ens: f64,
    pub ens_chosen: Vec<usize>,
    pub wa: f64,
    pub wa_chosen: Vec<usize>,
    /// Mean Jaccard overlap of the merged ENS selection with the truth mask.
    pub ens_jaccard: Option<f64>,
    /// Same for each model's own selection, averaged over models.
    pub single_jaccard: Option<f64>,
    pub final_diversity: f64,
    /// ENS metric per ablation, in [`Ablation::ALL`] order.
    pub ablations: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MethodRow {
    fn new(method: &str, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        MethodRow {
            method: method.to_string(),
            values,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub metric: Metric,
    pub seeds: Vec<SeedResult>,
    pub rows: Vec<MethodRow>,
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| SugarError::io(path, e))
    }
}

/// Mean and population standard deviation; a single value has std 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Caps the global worker pool at `SUGAR_NUM_WORKERS` when set. Returns the
/// pool size in effect.
pub fn init_worker_pool() -> Result<usize> {
    if let Ok(raw) = std::env::var("SUGAR_NUM_WORKERS") {
        let n: usize =
            raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                SugarError::Config(format!("SUGAR_NUM_WORKERS must be a positive integer, got `{raw}`"))
            })?;
        // A pool may already exist (e.g. in tests); that is not an error.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

pub fn load_data(source: &DataSource) -> Result<DatasetSplit> {
    match source {
        DataSource::Synth(c) => gen_dataset(c),
        DataSource::Dir(dir) => DatasetSplit::read(dir),
    }
}

/// Full-graph ERM variant of a training config: one model, no mask, no
/// auxiliary terms, no sampler.
pub fn erm_config(train: &TrainConfig) -> TrainConfig {
    let mut c = train.clone();
    c.n_models = 1;
    c.mask_mode = MaskMode::Full;
    c.objective.alpha = 0.0;
    c.objective.beta = 0.0;
    c.sampler.enabled = false;
    c.ablation = Ablation::SuNone;
    c
}

fn mean_jaccard(sels: impl Iterator<Item = (Option<SubgraphSelection>, Option<Vec<bool>>)>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (sel, truth) in sels {
        if let (Some(sel), Some(truth)) = (sel, truth) {
            sum += sel.jaccard(&truth);
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn select(models: &[InvariantGNN], val: &[Graph], config: &AggregationConfig) -> Result<Vec<usize>> {
    let sel = match config.selection {
        Selection::Greedy => select_greedy(models, val, config)?,
        Selection::Uniform => select_uniform(models.len())?,
    };
    Ok(sel.chosen_indices)
}

fn ens_metric(outcome: &TrainOutcome, data: &DatasetSplit, agg: &AggregationConfig) -> Result<f64> {
    let ens = AggregationConfig {
        mode: AggregationMode::Ens,
        ..agg.clone()
    };
    let chosen = select(&outcome.models, &data.val, &ens)?;
    EnsCache::new(&outcome.models, &data.test)?.metric(&chosen, &ens)
}

/// Trains, selects, aggregates and evaluates one seed.
pub fn run_seed(config: &ExperimentConfig, data: &DatasetSplit, seed: u64) -> Result<SeedResult> {
    let ctx = |e: SugarError| match e {
        SugarError::Config(m) => SugarError::Config(format!("seed {seed}: {m}")),
        other => other,
    };
    let metric = config.train.metric;
    let outcome = train_sugar(&config.train, data, seed).map_err(ctx)?;
    let ratio = config.train.inference_ratio();
    let single = outcome
        .models
        .par_iter()
        .map(|m| validate(m, &data.test, ratio, metric))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..single.len())
        .max_by(|&a, &b| outcome.best_val[a].total_cmp(&outcome.best_val[b]).then(b.cmp(&a)))
        .unwrap_or(0);

    let ens_cfg = AggregationConfig {
        mode: AggregationMode::Ens,
        metric,
        ..config.aggregate.clone()
    };
    let ens_chosen = select(&outcome.models, &data.val, &ens_cfg)?;
    let cache = EnsCache::new(&outcome.models, &data.test)?;
    let ens_preds = cache.predict(&ens_chosen, &ens_cfg)?;
    let ens = cache.metric(&ens_chosen, &ens_cfg)?;
    let all: Vec<usize> = (0..outcome.models.len()).collect();
    let all_preds = cache.predict(&all, &ens_cfg)?;
    let truth = |g: &Graph| g.truth_edge_mask().map(<[bool]>::to_vec);
    let ens_jaccard = mean_jaccard(
        ens_preds
            .iter()
            .zip(&data.test)
            .map(|(p, g)| (p.merged.clone(), truth(g))),
    );
    let single_jaccard = mean_jaccard(
        all_preds
            .iter()
            .zip(&data.test)
            .flat_map(|(p, g)| p.per_model.iter().map(move |s| (Some(s.clone()), truth(g)))),
    );

    let wa_cfg = AggregationConfig {
        mode: AggregationMode::Wa,
        metric,
        ..config.aggregate.clone()
    };
    let wa_chosen = select(&outcome.models, &data.val, &wa_cfg)?;
    let members: Vec<_> = wa_chosen.iter().map(|&i| &outcome.models[i]).collect();
    let wa_model = crate::aggregate::weight_averaged_model(&members)?;
    let wa = validate(&wa_model, &data.test, Some(wa_cfg.k_ratio), metric)?;

    let erm = if config.erm_baseline {
        let erm_cfg = erm_config(&config.train);
        let out = train_sugar(&erm_cfg, data, seed).map_err(ctx)?;
        Some(validate(&out.models[0], &data.test, None, metric)?)
    } else {
        None
    };

    let mut ablations = Vec::new();
    if config.ablation_grid {
        for ab in Ablation::ALL {
            let value = if ab == config.train.ablation {
                ens
            } else {
                let cfg = TrainConfig {
                    ablation: ab,
                    ..config.train.clone()
                };
                ens_metric(&train_sugar(&cfg, data, seed).map_err(ctx)?, data, &ens_cfg)?
            };
            ablations.push((ab.name().to_string(), value));
        }
    }

    Ok(SeedResult {
        seed,
        erm,
        best_single: single[best],
        mean_single: single.iter().sum::<f64>() / single.len() as f64,
        single,
        ens,
        ens_chosen,
        wa,
        wa_chosen,
        ens_jaccard,
        single_jaccard,
        final_diversity: outcome.final_diversity,
        ablations,
    })
}

/// Runs every seed (concurrently) and reduces them into per-method rows in
/// a fixed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let data = load_data(&config.data)?;
    let seeds = config
        .seeds
        .par_iter()
        .map(|&s| run_seed(config, &data, s))
        .collect::<Result<Vec<_>>>()?;
    let report = assemble_report(&config.name, config.train.metric, seeds);
    if let Some(path) = &config.report {
        report.write(path)?;
    }
    Ok(report)
}

pub fn assemble_report(name: &str, metric: Metric, seeds: Vec<SeedResult>) -> ExperimentReport {
    let col = |f: &dyn Fn(&SeedResult) -> Option<f64>| -> Option<Vec<f64>> { seeds.iter().map(f).collect() };
    let mut rows = Vec::new();
    if let Some(v) = col(&|s| s.erm) {
        rows.push(MethodRow::new(ROW_ERM, v));
    }
    for (name, f) in [
        (
            ROW_BEST_SINGLE,
            &(|s: &SeedResult| Some(s.best_single)) as &dyn Fn(&SeedResult) -> Option<f64>,
        ),
        (ROW_MEAN_SINGLE, &|s: &SeedResult| Some(s.mean_single)),
        (ROW_ENS, &|s: &SeedResult| Some(s.ens)),
        (ROW_WA, &|s: &SeedResult| Some(s.wa)),
    ] {
        if let Some(v) = col(f) {
            rows.push(MethodRow::new(name, v));
        }
    }
    if let Some(first) = seeds.first() {
        for (i, (ab, _)) in first.ablations.iter().enumerate() {
            if let Some(v) = col(&|s| s.ablations.get(i).map(|a| a.1)) {
                rows.push(MethodRow::new(ab, v));
            }
        }
    }
    ExperimentReport {
        name: name.to_string(),
        metric,
        seeds,
        rows,
    }
}

/// Markdown table with one column per report and one row per method, cells
/// formatted as `mean±std` in percent with two decimals. Missing cells are
/// shown as `—`.
pub fn metrics_table(reports: &[ExperimentReport]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        for row in &r.rows {
            if !methods.contains(&row.method.as_str()) {
                methods.push(&row.method);
            }
        }
    }
    let mut out = String::from("| Method |");
    for r in reports {
        let _ = write!(out, " {} |", r.name);
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(reports.len()));
    out.push('\n');
    for m in methods {
        let _ = write!(out, "| {m} |");
        for r in reports {
            match r.row(m) {
                Some(row) => {
                    let _ = write!(out, " {:.2}±{:.2} |", 100.0 * row.mean, 100.0 * row.std);
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out
}

pub enum VizInput<'a> {
    Weights(&'a EdgeWeights),
    Selection(&'a SubgraphSelection),
}

pub const MIN_PENWIDTH: f64 = 0.5;
pub const MAX_PENWIDTH: f64 = 5.0;

const PALETTE: [&str; 6] = ["1f77b4", "d62728", "2ca02c", "9467bd", "ff7f0e", "8c564b"];

/// Cluster id of each truth edge: connected components of the truth-edge
/// subgraph, numbered by their smallest edge index.
fn truth_clusters(graph: &Graph, truth: &[bool]) -> Vec<Option<usize>> {
    let mut parent: Vec<usize> = (0..graph.num_nodes()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        if truth[e] {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            parent[a] = b;
        }
    }
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(u, _))| {
            if !truth[e] {
                return None;
            }
            let root = find(&mut parent, u);
            let next = ids.len();
            Some(*ids.entry(root).or_insert(next))
        })
        .collect()
}

/// Graphviz DOT text for a graph with per-edge importance. Width and
/// opacity grow linearly with the weight; truth edges carry `truth=true`, a
/// `motif` cluster id and a per-cluster colour.
pub fn render_dot(graph: &Graph, input: &VizInput) -> Result<String> {
    let weights: Vec<f64> = match input {
        VizInput::Weights(w) => {
            w.check_aligned(graph)?;
            w.values().to_vec()
        }
        VizInput::Selection(s) => {
            if s.edge_indices().iter().any(|&i| i >= graph.num_edges()) {
                return Err(SugarError::MisalignedWeights {
                    expected: graph.num_edges(),
                    got: s.edge_indices().iter().max().map_or(0, |m| m + 1),
                });
            }
            (0..graph.num_edges())
                .map(|i| if s.contains(i) { 1.0 } else { 0.0 })
                .collect()
        }
    };
    let clusters = graph
        .truth_edge_mask()
        .map(|t| truth_clusters(graph, t))
        .unwrap_or_else(|| vec![None; graph.num_edges()]);

    let mut out = String::from("graph G {\n  node [shape=circle, width=0.3, label=\"\"];\n");
    let _ = writeln!(out, "  label=\"y={}\";", graph.label());
    for v in 0..graph.num_nodes() {
        let _ = writeln!(out, "  n{v};");
    }
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        let w = weights[e];
        let pen = MIN_PENWIDTH + (MAX_PENWIDTH - MIN_PENWIDTH) * w;
        let alpha = (0x20 as f64 + (0xff - 0x20) as f64 * w).round() as u8;
        let rgb = match clusters[e] {
            Some(c) => PALETTE[c % PALETTE.len()],
            None => "000000",
        };
        let _ = write!(
            out,
            "  n{u} -- n{v} [score={w:.4}, penwidth={pen:.4}, color=\"#{rgb}{alpha:02x}\""
        );
        if let Some(c) = clusters[e] {
            let _ = write!(out, ", truth=true, motif={c}");
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_subgraph_viz(graph: &Graph, input: &VizInput, path: &Path) -> Result<()> {
    let text = render_dot(graph, input)?;
    fs::write(path, text).map_err(|e| SugarError::io(path, e))
}

/// Empirical joint distribution over tuples of small discrete variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    arity: usize,
    cells: BTreeMap<Vec<u64>, f64>,
    total: f64,
}

impl DiscreteJoint {
    pub fn new(arity: usize) -> Self {
        DiscreteJoint {
            arity,
            cells: BTreeMap::new(),
            total: 0.0,
        }
    }

    /// Builds a joint from `(tuple, mass)` pairs. Masses may be counts or
    /// probabilities.
    pub fn from_weighted(arity: usize, items: impl IntoIterator<Item = (Vec<u64>, f64)>) -> Result<Self> {
        let mut j = DiscreteJoint::new(arity);
        for (t, w) in items {
            j.add(t, w)?;
        }
        if j.total <= 0.0 {
            return Err(SugarError::Empty("joint distribution"));
        }
        Ok(j)
    }

    pub fn add(&mut self, tuple: Vec<u64>, mass: f64) -> Result<()> {
        if tuple.len() != self.arity {
            return Err(SugarError::ShapeMismatch {
                name: "joint tuple".into(),
                expected: vec![self.arity],
                got: vec![tuple.len()],
            });
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(SugarError::NonFinite(format!("joint mass {mass}")));
        }
        if mass > 0.0 {
            *self.cells.entry(tuple).or_insert(0.0) += mass;
            self.total += mass;
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Marginal probabilities over the listed variables.
    fn marginal(&self, vars: &[usize]) -> BTreeMap<Vec<u64>, f64> {
        assert!(vars.iter().all(|&v| v < self.arity), "variable index out of range");
        let mut out = BTreeMap::new();
        for (t, &m) in &self.cells {
            let key: Vec<u64> = vars.iter().map(|&v| t[v]).collect();
            *out.entry(key).or_insert(0.0) += m / self.total;
        }
        out
    }

    /// Joint entropy `H(vars)` in nats.
    pub fn entropy(&self, vars: &[usize]) -> f64 {
        self.marginal(vars)
            .values()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// `H(a | given)`.
    pub fn conditional_entropy(&self, a: &[usize], given: &[usize]) -> f64 {
        let both: Vec<usize> = a.iter().chain(given).copied().collect();
        self.entropy(&both) - self.entropy(given)
    }
}

/// Plug-in estimate of `I(A; B | C)` in nats, where `a`, `b`, `c` list
/// variable indices of the joint (each may group several variables; `c` may
/// be empty). Empty cells contribute nothing. Panics on an out-of-range
/// variable index.
pub fn conditional_mi(joint: &DiscreteJoint, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
    let abc: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    let ac: Vec<usize> = a.iter().chain(c).copied().collect();
    let bc: Vec<usize> = b.iter().chain(c).copied().collect();
    let p_abc = joint.marginal(&abc);
    let p_ac = joint.marginal(&ac);
    let p_bc = joint.marginal(&bc);
    let p_c = joint.marginal(c);
    let (na, nb) = (a.len(), b.len());
    let mut mi = 0.0;
    for (key, &p) in &p_abc {
        if p <= 0.0 {
            continue;
        }
        let ka = &key[..na];
        let kb = &key[na..na + nb];
        let kc = &key[na + nb..];
        let ac_key: Vec<u64> = ka.iter().chain(kc).copied().collect();
        let bc_key: Vec<u64> = kb.iter().chain(kc).copied().collect();
        // p(a,b|c) / (p(a|c) p(b|c)) = p(a,b,c) p(c) / (p(a,c) p(b,c))
        mi += p * (p * p_c[kc] / (p_ac[&ac_key] * p_bc[&bc_key])).ln();
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mi_of_copied_fair_bit_is_ln2() {
        let j = DiscreteJoint::from_weighted(3, [(vec![0, 0, 7], 1.0), (vec![1, 1, 7], 1.0)]).unwrap();
        assert!((conditional_mi(&j, &[0], &[1], &[2]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((conditional_mi(&j, &[0], &[1], &[]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mi_of_independent_bits_is_zero() {
        let mut items = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    let pa = if c == 0 {
                        [0.3, 0.7][a as usize]
                    } else {
                        [0.6, 0.4][a as usize]
                    };
                    let pb = [0.2, 0.5, 0.3][b as usize];
                    items.push((vec![a, b, c], pa * pb * 0.5));
                }
            }
        }
        let j = DiscreteJoint::from_weighted(3, items).unwrap();
        assert!(conditional_mi(&j, &[0], &[1], &[2]).abs() < 1e-12);
    }

    #[test]
    fn empty_joint_is_rejected() {
        assert!(DiscreteJoint::from_weighted(2, [(vec![0, 0], 0.0)]).is_err());
        assert!(DiscreteJoint::from_weighted(2, [(vec![0], 1.0)]).is_err());
    }

    #[test]
    fn single_seed_std_is_zero() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn viz_widths_follow_weights() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)], vec![vec![0.0]; 3], 0, None, None).unwrap();
        let w = EdgeWeights::new(vec![1.0, 0.0]).unwrap();
        let dot = render_dot(&g, &VizInput::Weights(&w)).unwrap();
        assert!(dot.contains("n0 -- n1 [score=1.0000, penwidth=5.0000"));
        assert!(dot.contains("n1 -- n2 [score=0.0000, penwidth=0.5000"));
        let sel = SubgraphSelection::new(vec![1], 2).unwrap();
        let dot = render_dot(&g, &VizInput::Selection(&sel)).unwrap();
        assert!(dot.contains("n1 -- n2 [score=1.0000, penwidth=5.0000"));
        let short = EdgeWeights::new(vec![1.0]).unwrap();
        assert!(render_dot(&g, &VizInput::Weights(&short)).is_err());
    }
}
