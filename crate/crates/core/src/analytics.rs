//! Model inputs and topology descriptors derived from dependency graphs.
//!
//! Opcodes are mapped through a dataset-wide vocabulary (index 0 reserved
//! for unknown names) into per-node one-hot features. Separately, five
//! topological features summarize each graph for interpretability plots:
//! node and edge counts plus mean degree, closeness and betweenness
//! centrality, all on the simple undirected unweighted view.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depgraph::{DepGraph, Label};

pub const UNKNOWN_OP: &str = "<unk>";
pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("cannot build a vocabulary from zero graphs")]
    EmptyDataset,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
}

/// Ordered opcode names; index 0 is always `<unk>`, the rest sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
    /// Number of graphs the vocabulary was built from (not persisted).
    pub built_from: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabDoc {
    version: u32,
    names: Vec<String>,
}

impl OpVocabulary {
    /// Builds from an explicit name list, validating the layout invariants.
    pub fn from_names(names: Vec<String>) -> Result<Self, AnalyticsError> {
        if names.first().map(String::as_str) != Some(UNKNOWN_OP) {
            return Err(AnalyticsError::InvalidVocab(format!(
                "index 0 must be `{UNKNOWN_OP}`"
            )));
        }
        if !names[1..].windows(2).all(|w| w[0] < w[1]) {
            return Err(AnalyticsError::InvalidVocab(
                "names after index 0 must be unique and sorted".into(),
            ));
        }
        if names[1..].iter().any(|n| n == UNKNOWN_OP) {
            return Err(AnalyticsError::InvalidVocab(format!(
                "`{UNKNOWN_OP}` may only appear at index 0"
            )));
        }
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(OpVocabulary {
            names,
            index,
            built_from: 0,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Index of `op`, or 0 when it is not in the vocabulary.
    pub fn lookup(&self, op: &str) -> usize {
        self.index.get(op).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VocabDoc {
            version: VOCAB_FORMAT_VERSION,
            names: self.names.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AnalyticsError> {
        let doc: VocabDoc =
            serde_json::from_str(text).map_err(|e| AnalyticsError::InvalidVocab(e.to_string()))?;
        if doc.version != VOCAB_FORMAT_VERSION {
            return Err(AnalyticsError::InvalidVocab(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        Self::from_names(doc.names)
    }
}

impl Serialize for OpVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabDoc {
            version: VOCAB_FORMAT_VERSION,
            names: self.names.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OpVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = VocabDoc::deserialize(d)?;
        if doc.version != VOCAB_FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported vocabulary version {}",
                doc.version
            )));
        }
        OpVocabulary::from_names(doc.names).map_err(serde::de::Error::custom)
    }
}

pub fn build_vocab<'a, I>(graphs: I) -> Result<OpVocabulary, AnalyticsError>
where
    I: IntoIterator<Item = &'a DepGraph>,
{
    let mut ops = BTreeSet::new();
    let mut count = 0;
    for g in graphs {
        count += 1;
        ops.extend(g.nodes.iter().map(|n| n.opcode.as_str()));
    }
    if count == 0 {
        return Err(AnalyticsError::EmptyDataset);
    }
    let names = std::iter::once(UNKNOWN_OP.to_string())
        .chain(ops.into_iter().filter(|o| *o != UNKNOWN_OP).map(str::to_string))
        .collect();
    let mut vocab = OpVocabulary::from_names(names)?;
    vocab.built_from = count;
    Ok(vocab)
}

/// An encoded training example.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub node_ops: Vec<usize>,
    /// Directed `(src, dst)` pairs with edge kinds erased.
    pub edges: Vec<(usize, usize)>,
    pub edge_weights: Vec<u64>,
    pub label: Option<Label>,
    pub family: Option<String>,
}

impl GraphSample {
    pub fn num_nodes(&self) -> usize {
        self.node_ops.len()
    }

    /// `num_nodes × vocab_size` one-hot feature matrix.
    pub fn one_hot(&self, vocab_size: usize) -> Array2<f64> {
        let mut x = Array2::zeros((self.num_nodes(), vocab_size));
        for (row, &op) in self.node_ops.iter().enumerate() {
            x[[row, op]] = 1.0;
        }
        x
    }
}

pub fn encode(g: &DepGraph, vocab: &OpVocabulary) -> Result<GraphSample, AnalyticsError> {
    if g.nodes.is_empty() {
        return Err(AnalyticsError::EmptyGraph);
    }
    Ok(GraphSample {
        node_ops: g.nodes.iter().map(|n| vocab.lookup(&n.opcode)).collect(),
        edges: g.edges.iter().map(|e| (e.src, e.dst)).collect(),
        edge_weights: g.edges.iter().map(|e| e.weight).collect(),
        label: g.label,
        family: g.family.clone(),
    })
}

/// Sorted, deduplicated undirected adjacency lists without self-loops.
pub fn simple_undirected(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); num_nodes];
    for (a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn graph_adjacency(g: &DepGraph) -> Vec<Vec<usize>> {
    simple_undirected(g.nodes.len(), g.edges.iter().map(|e| (e.src, e.dst)))
}

pub fn degree_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    adj.iter()
        .map(|nb| nb.len() as f64 / (n - 1) as f64)
        .collect()
}

fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].unwrap_or(0);
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Closeness scaled by the reachable fraction of the graph, so that
/// disconnected graphs stay finite.
pub fn closeness_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    (0..n)
        .map(|v| {
            let dist = bfs_distances(adj, v);
            let (reach, total) = dist
                .iter()
                .flatten()
                .fold((0usize, 0usize), |(r, t), d| (r + 1, t + d));
            if reach <= 1 || total == 0 {
                return 0.0;
            }
            let r1 = (reach - 1) as f64;
            (r1 / total as f64) * (r1 / (n - 1) as f64)
        })
        .collect()
}

/// Brandes' algorithm on an undirected graph, normalized by
/// `2 / ((n-1)(n-2))` over unordered pairs.
pub fn betweenness_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut bc = vec![0.0; n];
    if n <= 2 {
        return bc;
    }
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::new();

    for s in 0..n {
        stack.clear();
        preds.iter_mut().for_each(Vec::clear);
        sigma.fill(0.0);
        dist.fill(-1);
        delta.fill(0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Every unordered pair was counted from both ends.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter_mut().for_each(|b| *b *= scale);
    bc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoFeatures {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree_centrality: f64,
    pub avg_closeness_centrality: f64,
    pub avg_betweenness_centrality: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn topo_features(g: &DepGraph) -> Result<TopoFeatures, AnalyticsError> {
    if g.nodes.is_empty() {
        return Err(AnalyticsError::EmptyGraph);
    }
    let adj = graph_adjacency(g);
    Ok(TopoFeatures {
        num_nodes: adj.len(),
        num_edges: adj.iter().map(Vec::len).sum::<usize>() / 2,
        avg_degree_centrality: mean(&degree_centrality(&adj)),
        avg_closeness_centrality: mean(&closeness_centrality(&adj)),
        avg_betweenness_centrality: mean(&betweenness_centrality(&adj)),
    })
}

pub const FEATURES_CSV_HEADER: &str =
    "origin,label,nodes,edges,avg_degree_c,avg_closeness_c,avg_betweenness_c";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per sample in input order; reals with 6 decimals, missing
/// labels as an empty field.
pub fn export_features_csv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (&'a str, Option<Label>, &'a TopoFeatures)>,
{
    let mut out = String::from(FEATURES_CSV_HEADER);
    out.push('\n');
    for (origin, label, f) in rows {
        let label = label.map(|l| l.as_u8().to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            csv_field(origin),
            label,
            f.num_nodes,
            f.num_edges,
            f.avg_degree_centrality,
            f.avg_closeness_centrality,
            f.avg_betweenness_centrality
        );
    }
    out
}
