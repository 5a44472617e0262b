//! Graph data model, edge-weight containers and top-k subgraph extraction.
//!
//! Undirected edges are stored once as `(src, dst)` with `src < dst`. The
//! order of the edge list is authoritative: every [`EdgeWeights`] is aligned
//! to it index by index.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};

/// Tolerance used when turning a ratio into an edge count, so that
/// `0.85 * 100` rounds to 85 rather than 86.
const RATIO_EPS: f64 = 1e-9;

/// An attributed, labelled, undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    feature_dim: usize,
    /// Row-major `[num_nodes x feature_dim]`.
    features: Vec<f64>,
    label: usize,
    env_id: Option<i64>,
    truth_edge_mask: Option<Vec<bool>>,
}

impl Graph {
    /// Builds a graph, canonicalising every edge to `src < dst`.
    ///
    /// Rejects self-loops, duplicate edges, out-of-range endpoints, ragged
    /// feature rows and truth masks whose length differs from the edge list.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
        label: usize,
        env_id: Option<i64>,
        truth_edge_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if features.len() != num_nodes {
            return Err(SugarError::InvalidGraph(format!(
                "{} feature rows for {} nodes",
                features.len(),
                num_nodes
            )));
        }
        let feature_dim = features.first().map_or(0, Vec::len);
        if features.iter().any(|row| row.len() != feature_dim) {
            return Err(SugarError::InvalidGraph("ragged feature rows".into()));
        }
        let flat: Vec<f64> = features.into_iter().flatten().collect();
        Self::from_flat(num_nodes, edges, feature_dim, flat, label, env_id, truth_edge_mask)
    }

    pub fn from_flat(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        feature_dim: usize,
        features: Vec<f64>,
        label: usize,
        env_id: Option<i64>,
        truth_edge_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if features.len() != num_nodes * feature_dim {
            return Err(SugarError::InvalidGraph(format!(
                "feature buffer has {} values, expected {}",
                features.len(),
                num_nodes * feature_dim
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canonical = Vec::with_capacity(edges.len());
        for (s, d) in edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(SugarError::InvalidGraph(format!(
                    "edge ({s}, {d}) references a node >= {num_nodes}"
                )));
            }
            if s == d {
                return Err(SugarError::InvalidGraph(format!("self-loop on node {s}")));
            }
            let e = (s.min(d), s.max(d));
            if !seen.insert(e) {
                return Err(SugarError::InvalidGraph(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            canonical.push(e);
        }
        if let Some(mask) = &truth_edge_mask {
            if mask.len() != canonical.len() {
                return Err(SugarError::InvalidGraph(format!(
                    "truth mask has {} entries for {} edges",
                    mask.len(),
                    canonical.len()
                )));
            }
        }
        Ok(Graph {
            num_nodes,
            edges: canonical,
            feature_dim,
            features,
            label,
            env_id,
            truth_edge_mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Row-major node feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn env_id(&self) -> Option<i64> {
        self.env_id
    }

    pub fn truth_edge_mask(&self) -> Option<&[bool]> {
        self.truth_edge_mask.as_deref()
    }

    /// Keeps the edges at `indices` (in the given order) with all nodes and
    /// features. The truth mask is subset accordingly.
    pub fn edge_subgraph(&self, indices: &[usize]) -> Result<Graph> {
        let mut edges = Vec::with_capacity(indices.len());
        for &i in indices {
            let e = *self.edges.get(i).ok_or(SugarError::IndexOutOfRange {
                index: i,
                len: self.edges.len(),
            })?;
            edges.push(e);
        }
        let mask = self
            .truth_edge_mask
            .as_ref()
            .map(|m| indices.iter().map(|&i| m[i]).collect());
        Ok(Graph {
            num_nodes: self.num_nodes,
            edges,
            feature_dim: self.feature_dim,
            features: self.features.clone(),
            label: self.label,
            env_id: self.env_id,
            truth_edge_mask: mask,
        })
    }

    /// Relabels node `v` as `perm[v]`. Edge order is preserved, so edge `i`
    /// of the result is the image of edge `i` of `self`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.num_nodes {
            return Err(SugarError::InvalidGraph("permutation length mismatch".into()));
        }
        let mut features = vec![0.0; self.features.len()];
        for (v, &pv) in perm.iter().enumerate() {
            features[pv * self.feature_dim..(pv + 1) * self.feature_dim].copy_from_slice(self.feature_row(v));
        }
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        Graph::from_flat(
            self.num_nodes,
            edges,
            self.feature_dim,
            features,
            self.label,
            self.env_id,
            self.truth_edge_mask.clone(),
        )
    }

    /// Number of connected components (isolated nodes count as components).
    pub fn connected_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes];
        let mut components = 0;
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes > 0 && self.connected_components() == 1
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(s, d) in &self.edges {
            adj[s].push(d);
            adj[d].push(s);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(s, d) in &self.edges {
            deg[s] += 1;
            deg[d] += 1;
        }
        deg
    }
}

/// Per-edge scores in `[0, 1]`, aligned to a graph's edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeights {
    values: Vec<f64>,
}

impl EdgeWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SugarError::WeightOutOfRange(bad));
        }
        Ok(EdgeWeights { values })
    }

    pub fn ones(len: usize) -> Self {
        EdgeWeights { values: vec![1.0; len] }
    }

    pub fn zeros(len: usize) -> Self {
        EdgeWeights { values: vec![0.0; len] }
    }

    /// Weights read off a graph's ground-truth mask (1 for invariant edges).
    pub fn from_truth(graph: &Graph) -> Option<Self> {
        graph.truth_edge_mask().map(|m| EdgeWeights {
            values: m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_aligned(&self, graph: &Graph) -> Result<()> {
        if self.values.len() != graph.num_edges() {
            return Err(SugarError::MisalignedWeights {
                expected: graph.num_edges(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Sorted set of retained edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphSelection {
    edge_indices: Vec<usize>,
}

impl SubgraphSelection {
    /// Builds a selection over a parent graph with `edge_count` edges. The
    /// selection must be nonempty, duplicate-free and in range.
    pub fn new(mut edge_indices: Vec<usize>, edge_count: usize) -> Result<Self> {
        if edge_indices.is_empty() {
            return Err(SugarError::KOutOfRange { k: 0, len: edge_count });
        }
        edge_indices.sort_unstable();
        edge_indices.dedup();
        if let Some(&bad) = edge_indices.iter().find(|&&i| i >= edge_count) {
            return Err(SugarError::IndexOutOfRange {
                index: bad,
                len: edge_count,
            });
        }
        Ok(SubgraphSelection { edge_indices })
    }

    pub fn edge_indices(&self) -> &[usize] {
        &self.edge_indices
    }

    pub fn k(&self) -> usize {
        self.edge_indices.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.edge_indices.binary_search(&index).is_ok()
    }

    /// Jaccard overlap between this selection and the edges flagged in `truth`.
    pub fn jaccard(&self, truth: &[bool]) -> f64 {
        let truth_count = truth.iter().filter(|&&b| b).count();
        let inter = self.edge_indices.iter().filter(|&&i| truth[i]).count();
        let union = truth_count + self.k() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Number of edges retained for a ratio `s_c`: `ceil(s_c * edge_count)`
/// clamped to `[1, edge_count]`.
pub fn ratio_to_k(ratio: f64, edge_count: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SugarError::InvalidRatio(ratio));
    }
    if edge_count == 0 {
        return Err(SugarError::EmptyGraph);
    }
    let k = (ratio * edge_count as f64 - RATIO_EPS).ceil() as usize;
    Ok(k.clamp(1, edge_count))
}

/// The `k` edges with the largest weights, ties broken towards the smaller
/// edge index.
pub fn top_k_edges(weights: &EdgeWeights, k: usize) -> Result<SubgraphSelection> {
    top_k_indices(weights.values(), k).and_then(|idx| SubgraphSelection::new(idx, weights.len()))
}

pub(crate) fn top_k_indices(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(SugarError::KOutOfRange { k, len: values.len() });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// A graph whose message passing scales each edge by a weight. Borrows both
/// the graph and the weights; nothing is copied.
#[derive(Debug, Clone, Copy)]
pub struct MaskedGraph<'a> {
    pub graph: &'a Graph,
    pub weights: &'a [f64],
}

pub fn apply_soft_mask<'a>(graph: &'a Graph, weights: &'a EdgeWeights) -> Result<MaskedGraph<'a>> {
    weights.check_aligned(graph)?;
    Ok(MaskedGraph {
        graph,
        weights: weights.values(),
    })
}

/// 0/1 weights with ones on the selected edges.
pub fn selection_to_hard_mask(sel: &SubgraphSelection, edge_count: usize) -> Result<EdgeWeights> {
    let mut values = vec![0.0; edge_count];
    for &i in sel.edge_indices() {
        *values.get_mut(i).ok_or(SugarError::IndexOutOfRange {
            index: i,
            len: edge_count,
        })? = 1.0;
    }
    Ok(EdgeWeights { values })
}

/// One line of the JSON Lines graph format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub x: Vec<Vec<f64>>,
    pub y: usize,
    pub env: Option<i64>,
    pub mask: Option<Vec<u8>>,
}

impl From<&Graph> for GraphRecord {
    fn from(g: &Graph) -> Self {
        GraphRecord {
            num_nodes: g.num_nodes,
            edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
            x: (0..g.num_nodes).map(|v| g.feature_row(v).to_vec()).collect(),
            y: g.label,
            env: g.env_id,
            mask: g.truth_edge_mask.as_ref().map(|m| m.iter().map(|&b| b as u8).collect()),
        }
    }
}

impl TryFrom<GraphRecord> for Graph {
    type Error = SugarError;

    fn try_from(r: GraphRecord) -> Result<Graph> {
        let mask = match r.mask {
            Some(m) => Some(
                m.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(SugarError::InvalidGraph(format!("mask value {other}"))),
                    })
                    .collect::<Result<Vec<bool>>>()?,
            ),
            None => None,
        };
        Graph::new(
            r.num_nodes,
            r.edges.into_iter().map(|[s, d]| (s, d)).collect(),
            r.x,
            r.y,
            r.env,
            mask,
        )
    }
}

pub fn write_jsonl(path: &Path, graphs: &[Graph]) -> Result<()> {
    let file = File::create(path).map_err(|e| SugarError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for g in graphs {
        serde_json::to_writer(&mut out, &GraphRecord::from(g))?;
        out.write_all(b"\n").map_err(|e| SugarError::io(path, e))?;
    }
    out.flush().map_err(|e| SugarError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Graph>> {
    let file = File::open(path).map_err(|e| SugarError::io(path, e))?;
    let mut graphs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SugarError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphRecord = serde_json::from_str(&line)?;
        let graph = Graph::try_from(record)
            .map_err(|e| SugarError::InvalidGraph(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        graphs.push(graph);
    }
    Ok(graphs)
}
