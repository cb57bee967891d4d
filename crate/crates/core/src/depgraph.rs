//! Instruction dependency graphs.
//!
//! Every instruction of a [`TraceUnit`] becomes a node. Data edges run from
//! the most recent prior definition of a register to each instruction that
//! reads it (def → use), weighted by the byte size of the defined value.
//! Memory edges (store → load on an equal address annotation) and control
//! edges (terminator → next line) are optional.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ir::{sizeof_type, Register, TraceUnit, ValueType};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unsupported graph format version {0}")]
    VersionMismatch(u32),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign = 0,
    Malicious = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Data,
    Control,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepNode {
    pub id: usize,
    #[serde(rename = "op")]
    pub opcode: String,
    #[serde(rename = "type")]
    pub result_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepEdge {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "w")]
    pub weight: u64,
    pub kind: EdgeKind,
}

impl DepEdge {
    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// A weighted instruction dependency graph. Edges are kept sorted by
/// `(src, dst, kind)` and unique on that triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    pub nodes: Vec<DepNode>,
    pub edges: Vec<DepEdge>,
    pub label: Option<Label>,
    pub family: Option<String>,
    pub origin: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub control_edges: bool,
    pub memory_edges: bool,
}

pub fn build_graph(unit: &TraceUnit, opts: BuildOptions) -> DepGraph {
    let ins = &unit.instructions;
    let nodes = ins
        .iter()
        .enumerate()
        .map(|(id, i)| DepNode {
            id,
            opcode: i.opcode.clone(),
            result_type: i.result_type.clone(),
        })
        .collect();

    // First weight wins on duplicate (src, dst, kind).
    let mut edges: BTreeMap<(usize, usize, EdgeKind), u64> = BTreeMap::new();
    let mut last_def: HashMap<&Register, usize> = HashMap::new();
    let mut last_store: HashMap<u64, usize> = HashMap::new();

    for (c, cur) in ins.iter().enumerate() {
        for r in &cur.sources {
            if let Some(&p) = last_def.get(r) {
                edges
                    .entry((p, c, EdgeKind::Data))
                    .or_insert_with(|| sizeof_type(&ins[p].result_type));
            }
        }
        if opts.memory_edges {
            if let Some(addr) = cur.mem_addr {
                match cur.opcode.as_str() {
                    "load" => {
                        if let Some(&s) = last_store.get(&addr) {
                            edges
                                .entry((s, c, EdgeKind::Memory))
                                .or_insert_with(|| sizeof_type(&ins[s].result_type));
                        }
                    }
                    "store" => {
                        last_store.insert(addr, c);
                    }
                    _ => {}
                }
            }
        }
        if opts.control_edges && cur.is_terminator() && c + 1 < ins.len() {
            edges.entry((c, c + 1, EdgeKind::Control)).or_insert(1);
        }
        if let Some(d) = &cur.dest {
            last_def.insert(d, c);
        }
    }

    DepGraph {
        nodes,
        edges: edges
            .into_iter()
            .map(|((src, dst, kind), weight)| DepEdge {
                src,
                dst,
                weight,
                kind,
            })
            .collect(),
        label: None,
        family: None,
        origin: unit.origin.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub avg_degree: f64,
    pub max_degree: usize,
}

/// Degree summary on the undirected view: `2|E| / |V|` and the largest
/// in+out degree.
pub fn degree_stats(g: &DepGraph) -> Result<DegreeStats, GraphError> {
    let n = g.nodes.len();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let mut deg = vec![0usize; n];
    for e in &g.edges {
        deg[e.src] += 1;
        deg[e.dst] += 1;
    }
    Ok(DegreeStats {
        avg_degree: 2.0 * g.edges.len() as f64 / n as f64,
        max_degree: deg.into_iter().max().unwrap_or(0),
    })
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    version: u32,
    origin: String,
    label: Option<Label>,
    family: Option<String>,
    nodes: Vec<DepNode>,
    edges: Vec<DepEdge>,
}

impl DepGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn with_label(mut self, label: Option<Label>, family: Option<String>) -> Self {
        self.label = label;
        self.family = family;
        self
    }

    /// Canonical JSON: nodes in id order, edges sorted, compact, newline
    /// terminated. Equal graphs serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let mut edges = self.edges.clone();
        edges.sort_by_key(|e| (e.src, e.dst, e.kind));
        let doc = GraphDoc {
            version: GRAPH_FORMAT_VERSION,
            origin: self.origin.to_string_lossy().into_owned(),
            label: self.label,
            family: self.family.clone(),
            nodes: self.nodes.clone(),
            edges,
        };
        let mut s = serde_json::to_string(&doc).expect("graph documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<DepGraph, GraphError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| GraphError::Invalid("missing `version`".into()))?;
        if version != u64::from(GRAPH_FORMAT_VERSION) {
            return Err(GraphError::VersionMismatch(version as u32));
        }
        let doc: GraphDoc = serde_json::from_value(value)?;
        let n = doc.nodes.len();
        for (i, node) in doc.nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::Invalid(format!(
                    "node ids must be dense and ordered; position {i} has id {}",
                    node.id
                )));
            }
        }
        let mut edges = doc.edges;
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(GraphError::Invalid(format!(
                    "edge {}->{} references a missing node",
                    e.src, e.dst
                )));
            }
            if e.weight == 0 {
                return Err(GraphError::Invalid(format!(
                    "edge {}->{} has zero weight",
                    e.src, e.dst
                )));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst, e.kind));
        if edges
            .windows(2)
            .any(|w| (w[0].src, w[0].dst, w[0].kind) == (w[1].src, w[1].dst, w[1].kind))
        {
            return Err(GraphError::Invalid("duplicate (src, dst, kind) edge".into()));
        }
        Ok(DepGraph {
            nodes: doc.nodes,
            edges,
            label: doc.label,
            family: doc.family,
            origin: PathBuf::from(doc.origin),
        })
    }

    pub fn origin_path(&self) -> &Path {
        &self.origin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_trace;

    fn graph(text: &str, opts: BuildOptions) -> DepGraph {
        build_graph(&parse_trace(text, "t.trace").unwrap(), opts)
    }

    fn triples(g: &DepGraph) -> Vec<(usize, usize, u64, EdgeKind)> {
        g.edges.iter().map(|e| (e.src, e.dst, e.weight, e.kind)).collect()
    }

    #[test]
    fn worked_example_has_one_data_edge() {
        let g = graph("%3 = sub i32 %1, %2\n%5 = sub i32 %3, %4\n", BuildOptions::default());
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(triples(&g), [(0, 1, 4, EdgeKind::Data)]);
    }

    #[test]
    fn independent_instructions_have_no_edges() {
        let g = graph(
            "%a = add i32 %x, %y\n%b = mul i64 %p, %q\n%c = fadd double %u, %v\n",
            BuildOptions::default(),
        );
        assert_eq!(g.num_nodes(), 3);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn uses_resolve_to_most_recent_definition() {
        let text = "\
%3 = add i32 %1, %2
%3 = add i64 %1, %2
%9 = load i8, ptr %p
%4 = mul i64 %3, %3
";
        let g = graph(text, BuildOptions::default());
        assert_eq!(triples(&g), [(1, 3, 8, EdgeKind::Data)]);
    }

    #[test]
    fn memory_edges_follow_addresses() {
        let text = "\
store i32 %a, ptr %p ; addr=0x10
store i16 %b, ptr %q ; addr=0x20
store i64 %c, ptr %p ; addr=0x10
%x = load i32, ptr %r ; addr=0x10
%y = load i16, ptr %s ; addr=0x20
%z = load i16, ptr %s ; addr=0x30
";
        let off = graph(text, BuildOptions::default());
        assert!(off.edges.is_empty());
        let on = graph(
            text,
            BuildOptions {
                memory_edges: true,
                ..Default::default()
            },
        );
        assert_eq!(
            triples(&on),
            [(1, 4, 2, EdgeKind::Memory), (2, 3, 8, EdgeKind::Memory)]
        );
    }

    #[test]
    fn control_edges_link_terminators_to_next_line() {
        let text = "%c = icmp eq i32 %a, %b\nbr i1 %c, label %x, label %y\n%d = add i32 %a, %a\nret i32 %d\n";
        let g = graph(
            text,
            BuildOptions {
                control_edges: true,
                ..Default::default()
            },
        );
        assert_eq!(
            triples(&g),
            [
                (0, 1, 1, EdgeKind::Data),
                (1, 2, 1, EdgeKind::Control),
                (2, 3, 4, EdgeKind::Data)
            ]
        );
    }

    #[test]
    fn repeated_operand_collapses_to_one_edge() {
        let g = graph("%a = add i32 %x, %y\n%b = mul i32 %a, %a\n", BuildOptions::default());
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn degree_stats_examples() {
        let g = graph("%3 = sub i32 %1, %2\n%5 = sub i32 %3, %4\n", BuildOptions::default());
        let s = degree_stats(&g).unwrap();
        assert_eq!(s.avg_degree, 1.0);
        assert_eq!(s.max_degree, 1);

        let p3 = graph(
            "%a = add i32 %x, %y\n%b = add i32 %a, %y\n%c = add i32 %b, %y\n",
            BuildOptions::default(),
        );
        let s = degree_stats(&p3).unwrap();
        assert!((s.avg_degree - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.max_degree, 2);

        let empty = DepGraph {
            nodes: vec![],
            edges: vec![],
            label: None,
            family: None,
            origin: PathBuf::new(),
        };
        assert!(matches!(degree_stats(&empty), Err(GraphError::EmptyGraph)));
    }

    #[test]
    fn json_is_canonical_and_round_trips() {
        let g = graph("%3 = sub i32 %1, %2\n%5 = sub i32 %3, %4\n", BuildOptions::default())
            .with_label(Some(Label::Malicious), Some("worm".into()));
        let json = g.to_json();
        assert_eq!(
            json,
            "{\"version\":1,\"origin\":\"t.trace\",\"label\":1,\"family\":\"worm\",\
             \"nodes\":[{\"id\":0,\"op\":\"sub\",\"type\":\"i32\"},{\"id\":1,\"op\":\"sub\",\"type\":\"i32\"}],\
             \"edges\":[{\"src\":0,\"dst\":1,\"w\":4,\"kind\":\"data\"}]}\n"
        );
        let back = DepGraph::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn json_validation() {
        let bad_version = r#"{"version":2,"origin":"","label":null,"family":null,"nodes":[],"edges":[]}"#;
        assert!(matches!(
            DepGraph::from_json(bad_version),
            Err(GraphError::VersionMismatch(2))
        ));
        let dangling = r#"{"version":1,"origin":"","label":null,"family":null,
            "nodes":[{"id":0,"op":"add","type":"i32"}],"edges":[{"src":0,"dst":3,"w":4,"kind":"data"}]}"#;
        assert!(matches!(DepGraph::from_json(dangling), Err(GraphError::Invalid(_))));
        assert!(matches!(DepGraph::from_json("{\"version\":1,"), Err(GraphError::Json(_))));
        let bad_label = r#"{"version":1,"origin":"","label":3,"family":null,"nodes":[],"edges":[]}"#;
        assert!(DepGraph::from_json(bad_label).is_err());
    }
}
