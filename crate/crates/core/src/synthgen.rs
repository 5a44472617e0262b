//! SPMotif / SUMotif generators.
//!
//! A graph is one base graph (Tree, Ladder or Wheel) with one motif
//! (SPMotif) or two node-disjoint motifs (SUMotif) hanging off it by single
//! bridge edges. The motif(s) determine the label; the base kind is
//! correlated with the label in the training split only. Motif edges carry
//! a ground-truth invariant flag.
//!
//! Base kinds are assigned per class by shuffling an exact quota list, so
//! every split realises its target co-occurrence up to rounding. Each graph
//! then gets its own RNG stream derived from the master seed, which makes
//! the output independent of how many worker threads build it.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};
use crate::graph::{read_jsonl, write_jsonl, Graph};
use crate::seeds::derive_seed;

/// Lowest accepted bias. Slightly below 1/3 so that the customary "0.33"
/// setting is admitted.
pub const MIN_BIAS: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotifKind {
    House,
    Cycle,
    Crane,
}

impl MotifKind {
    pub const ALL: [MotifKind; 3] = [MotifKind::House, MotifKind::Cycle, MotifKind::Crane];

    pub fn template(self) -> (usize, &'static [(usize, usize)]) {
        match self {
            MotifKind::House => (5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]),
            MotifKind::Cycle => (6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]),
            MotifKind::Crane => (5, &[(0, 1), (1, 2), (2, 0), (1, 3), (2, 4)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseKind {
    Tree,
    Ladder,
    Wheel,
}

impl BaseKind {
    pub const ALL: [BaseKind; 3] = [BaseKind::Tree, BaseKind::Ladder, BaseKind::Wheel];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// SUMotif label `c` is the motif pair `SUMOTIF_PAIRS[c]`.
pub const SUMOTIF_PAIRS: [(MotifKind, MotifKind); 3] = [
    (MotifKind::House, MotifKind::Cycle),
    (MotifKind::Cycle, MotifKind::Crane),
    (MotifKind::Crane, MotifKind::House),
];

/// A graph under construction: topology plus per-edge invariant flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub invariant: Vec<bool>,
}

impl Fragment {
    fn new(num_nodes: usize, edges: Vec<(usize, usize)>, invariant: bool) -> Self {
        let flags = vec![invariant; edges.len()];
        Fragment {
            num_nodes,
            edges,
            invariant: flags,
        }
    }

    /// Appends `other` with relabelled nodes; returns the offset of its first node.
    fn absorb(&mut self, other: &Fragment) -> usize {
        let offset = self.num_nodes;
        self.edges
            .extend(other.edges.iter().map(|&(s, d)| (s + offset, d + offset)));
        self.invariant.extend_from_slice(&other.invariant);
        self.num_nodes += other.num_nodes;
        offset
    }

    /// Fills node features with i.i.d. `U[0, 1)` values.
    pub fn into_graph(self, label: usize, env: Option<i64>, feature_dim: usize, rng: &mut impl Rng) -> Result<Graph> {
        let features = (0..self.num_nodes * feature_dim).map(|_| rng.gen::<f64>()).collect();
        Graph::from_flat(
            self.num_nodes,
            self.edges,
            feature_dim,
            features,
            label,
            env,
            Some(self.invariant),
        )
    }
}

pub fn gen_motif(kind: MotifKind) -> Fragment {
    let (n, edges) = kind.template();
    Fragment::new(n, edges.to_vec(), true)
}

/// A connected base graph of roughly `size` nodes. Trees grow by uniform
/// random attachment; ladders are `2 x ceil(size/2)` grids; wheels are a hub
/// plus a ring of `size - 1` nodes.
pub fn gen_base(kind: BaseKind, size: usize, rng: &mut impl Rng) -> Result<Fragment> {
    if size < 4 {
        return Err(SugarError::SizeTooSmall(size));
    }
    let frag = match kind {
        BaseKind::Tree => {
            let edges = (1..size).map(|v| (rng.gen_range(0..v), v)).collect();
            Fragment::new(size, edges, false)
        }
        BaseKind::Ladder => {
            let rungs = size.div_ceil(2);
            let mut edges = Vec::with_capacity(3 * rungs);
            for i in 0..rungs {
                edges.push((i, rungs + i));
                if i + 1 < rungs {
                    edges.push((i, i + 1));
                    edges.push((rungs + i, rungs + i + 1));
                }
            }
            Fragment::new(2 * rungs, edges, false)
        }
        BaseKind::Wheel => {
            let rim = size - 1;
            let mut edges = Vec::with_capacity(2 * rim);
            for i in 1..=rim {
                edges.push((0, i));
                edges.push((i, if i == rim { 1 } else { i + 1 }));
            }
            Fragment::new(size, edges, false)
        }
    };
    Ok(frag)
}

fn attach_into(graph: &mut Fragment, base_nodes: usize, motif: &Fragment, rng: &mut impl Rng) {
    let motif_node = rng.gen_range(0..motif.num_nodes);
    let base_node = rng.gen_range(0..base_nodes);
    let offset = graph.absorb(motif);
    graph.edges.push((base_node, offset + motif_node));
    graph.invariant.push(false);
}

/// Disjoint union of `base` and `motif` joined by one bridge edge between a
/// uniformly chosen motif node and a uniformly chosen base node.
pub fn attach(base: &Fragment, motif: &Fragment, rng: &mut impl Rng) -> Fragment {
    let mut out = base.clone();
    attach_into(&mut out, base.num_nodes, motif, rng);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    SPMotif,
    SUMotif,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub mode: SynthMode,
    pub bias: f64,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub feature_dim: usize,
    pub base_size_range: (usize, usize),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: SynthMode::SPMotif,
            bias: 0.9,
            train_per_class: 3000,
            eval_per_class: 1000,
            feature_dim: 4,
            base_size_range: (8, 15),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias >= MIN_BIAS && self.bias < 1.0) {
            return Err(SugarError::Config(format!(
                "bias {} outside [{MIN_BIAS}, 1)",
                self.bias
            )));
        }
        if self.train_per_class == 0 || self.eval_per_class == 0 {
            return Err(SugarError::Config("per-class counts must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(SugarError::Config("feature_dim must be >= 1".into()));
        }
        let (lo, hi) = self.base_size_range;
        if lo < 4 || hi < lo {
            return Err(SugarError::Config(format!("invalid base_size_range ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Row `c` gives, for class `c`, the fraction of graphs built on each base kind.
pub type Cooccurrence = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCooccurrence {
    pub train: Cooccurrence,
    pub val: Cooccurrence,
    pub test: Cooccurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: SynthConfig,
    pub cooccurrence: SplitCooccurrence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Graph>,
    pub val: Vec<Graph>,
    pub test: Vec<Graph>,
    pub meta: Option<DatasetMeta>,
}

impl DatasetSplit {
    pub fn num_classes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|g| g.label() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn feature_dim(&self) -> usize {
        self.train.first().map_or(0, Graph::feature_dim)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| SugarError::io(dir, e))?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("val.jsonl"), &self.val)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        if let Some(meta) = &self.meta {
            let path = dir.join("meta.json");
            let text = serde_json::to_string_pretty(meta)?;
            fs::write(&path, text + "\n").map_err(|e| SugarError::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads `train/val/test.jsonl` (and `meta.json` when present) from `dir`.
    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| SugarError::io(&meta_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        Ok(DatasetSplit {
            train: read_jsonl(&dir.join("train.jsonl"))?,
            val: read_jsonl(&dir.join("val.jsonl"))?,
            test: read_jsonl(&dir.join("test.jsonl"))?,
            meta,
        })
    }
}

fn stream_seed(master: u64, split: u64, index: u64) -> u64 {
    derive_seed(master, &[split, index])
}

/// Exact per-class base quotas: `round(p * count)` paired with the class,
/// the remainder split evenly between the other two kinds.
fn base_quota(class: usize, count: usize, paired_prob: f64, rng: &mut impl Rng) -> Vec<BaseKind> {
    let paired = ((paired_prob * count as f64).round() as usize).min(count);
    let rest = count - paired;
    let others: Vec<BaseKind> = BaseKind::ALL.iter().copied().filter(|b| b.index() != class).collect();
    let first = rest / 2 + if rest % 2 == 1 && rng.gen::<bool>() { 1 } else { 0 };
    let mut out = Vec::with_capacity(count);
    out.extend(std::iter::repeat_n(BaseKind::ALL[class], paired));
    out.extend(std::iter::repeat_n(others[0], first));
    out.extend(std::iter::repeat_n(others[1], rest - first));
    out.shuffle(rng);
    out
}

fn build_graph(config: &SynthConfig, class: usize, base: BaseKind, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.base_size_range;
    let size = rng.gen_range(lo..=hi);
    let mut frag = gen_base(base, size, &mut rng)?;
    let base_nodes = frag.num_nodes;
    let motifs: Vec<MotifKind> = match config.mode {
        SynthMode::SPMotif => vec![MotifKind::ALL[class]],
        SynthMode::SUMotif => {
            let (a, b) = SUMOTIF_PAIRS[class];
            vec![a, b]
        }
    };
    for m in motifs {
        attach_into(&mut frag, base_nodes, &gen_motif(m), &mut rng);
    }
    frag.into_graph(class, Some(base.index() as i64), config.feature_dim, &mut rng)
}

fn gen_split(
    config: &SynthConfig,
    split: u64,
    per_class: usize,
    paired_prob: f64,
) -> Result<(Vec<Graph>, Cooccurrence)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, split, u64::MAX));
    let mut plan = Vec::with_capacity(3 * per_class);
    for class in 0..3 {
        for base in base_quota(class, per_class, paired_prob, &mut rng) {
            plan.push((class, base));
        }
    }
    let graphs = plan
        .par_iter()
        .enumerate()
        .map(|(i, &(class, base))| build_graph(config, class, base, stream_seed(config.seed, split, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, cooccurrence(&plan)))
}

fn cooccurrence(plan: &[(usize, BaseKind)]) -> Cooccurrence {
    let mut counts = [[0usize; 3]; 3];
    for &(c, b) in plan {
        counts[c][b.index()] += 1;
    }
    let mut out = [[0.0; 3]; 3];
    for c in 0..3 {
        let total: usize = counts[c].iter().sum();
        for b in 0..3 {
            out[c][b] = if total == 0 {
                0.0
            } else {
                counts[c][b] as f64 / total as f64
            };
        }
    }
    out
}

/// Realised co-occurrence of label and base kind (read from `env_id`).
pub fn realized_cooccurrence(graphs: &[Graph]) -> Cooccurrence {
    let plan: Vec<(usize, BaseKind)> = graphs
        .iter()
        .filter_map(|g| {
            let env = g.env_id()? as usize;
            (env < 3 && g.label() < 3).then(|| (g.label(), BaseKind::ALL[env]))
        })
        .collect();
    cooccurrence(&plan)
}

fn generate(config: &SynthConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let uniform = 1.0 / 3.0;
    let (train, train_co) = gen_split(config, 0, config.train_per_class, config.bias)?;
    let (val, val_co) = gen_split(config, 1, config.eval_per_class, uniform)?;
    let (test, test_co) = gen_split(config, 2, config.eval_per_class, uniform)?;
    Ok(DatasetSplit {
        train,
        val,
        test,
        meta: Some(DatasetMeta {
            config: config.clone(),
            cooccurrence: SplitCooccurrence {
                train: train_co,
                val: val_co,
                test: test_co,
            },
        }),
    })
}

/// 3-class single-motif dataset; label = motif index.
pub fn gen_spmotif(config: &SynthConfig) -> Result<DatasetSplit> {
    if config.mode != SynthMode::SPMotif {
        return Err(SugarError::Config("gen_spmotif requires mode = spmotif".into()));
    }
    generate(config)
}

/// 3-class two-motif dataset; label = index into [`SUMOTIF_PAIRS`].
pub fn gen_sumotif(config: &SynthConfig) -> Result<DatasetSplit> {
    if config.mode != SynthMode::SUMotif {
        return Err(SugarError::Config("gen_sumotif requires mode = sumotif".into()));
    }
    generate(config)
}

pub fn gen_dataset(config: &SynthConfig) -> Result<DatasetSplit> {
    generate(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag_graph(f: Fragment) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        f.into_graph(0, None, 2, &mut rng).unwrap()
    }

    fn is_acyclic(g: &Graph) -> bool {
        g.is_connected() && g.num_edges() + 1 == g.num_nodes()
    }

    #[test]
    fn motif_templates() {
        let house = frag_graph(gen_motif(MotifKind::House));
        assert_eq!((house.num_nodes(), house.num_edges()), (5, 6));
        assert!(house.is_connected());
        let cycle = frag_graph(gen_motif(MotifKind::Cycle));
        assert_eq!((cycle.num_nodes(), cycle.num_edges()), (6, 6));
        assert!(cycle.degrees().iter().all(|&d| d == 2));
        let crane = frag_graph(gen_motif(MotifKind::Crane));
        assert_eq!((crane.num_nodes(), crane.num_edges()), (5, 5));
        assert!(crane.is_connected());
        assert!(gen_motif(MotifKind::Crane).invariant.iter().all(|&b| b));
    }

    #[test]
    fn base_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 4..20 {
            let tree = frag_graph(gen_base(BaseKind::Tree, n, &mut rng).unwrap());
            assert_eq!(tree.num_nodes(), n);
            assert!(is_acyclic(&tree));
            let wheel = frag_graph(gen_base(BaseKind::Wheel, n, &mut rng).unwrap());
            let deg = wheel.degrees();
            assert_eq!(deg[0], n - 1);
            assert!(deg[1..].iter().all(|&d| d == 3));
            let ladder = frag_graph(gen_base(BaseKind::Ladder, n, &mut rng).unwrap());
            assert!(ladder.is_connected());
        }
        let ladder = frag_graph(gen_base(BaseKind::Ladder, 8, &mut rng).unwrap());
        assert_eq!((ladder.num_nodes(), ladder.num_edges()), (8, 10));
        assert!(gen_base(BaseKind::Tree, 3, &mut rng).is_err());
        assert!(!gen_base(BaseKind::Wheel, 6, &mut rng)
            .unwrap()
            .invariant
            .iter()
            .any(|&b| b));
    }

    #[test]
    fn attach_edge_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = gen_base(BaseKind::Tree, 10, &mut rng).unwrap();
        let g = frag_graph(attach(&base, &gen_motif(MotifKind::House), &mut rng));
        assert_eq!(g.num_nodes(), 15);
        assert_eq!(g.num_edges(), 16);
        assert_eq!(g.truth_edge_mask().unwrap().iter().filter(|&&b| b).count(), 6);
        assert!(g.is_connected());
    }

    #[test]
    fn config_validation() {
        let bad = SynthConfig {
            bias: 0.2,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let ok = SynthConfig {
            bias: 0.33,
            ..SynthConfig::default()
        };
        assert!(ok.validate().is_ok());
        let wrong_mode = SynthConfig {
            mode: SynthMode::SUMotif,
            ..SynthConfig::default()
        };
        assert!(gen_spmotif(&wrong_mode).is_err());
    }

    #[test]
    fn quotas_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = base_quota(1, 3000, 0.9, &mut rng);
        assert_eq!(q.iter().filter(|&&b| b == BaseKind::Ladder).count(), 2700);
        assert_eq!(q.iter().filter(|&&b| b == BaseKind::Tree).count(), 150);
    }
}
