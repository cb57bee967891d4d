//! Dataset handling, training and evaluation.

mod manifest;
mod metrics;
mod persist;
mod train;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analytics::{encode, AnalyticsError, GraphSample, OpVocabulary};
use crate::depgraph::{build_graph, BuildOptions, DepGraph, GraphError};
use crate::ir::{parse_ll, parse_trace, IrError};
use crate::sage::{forward, SageError};

pub use manifest::{split, Manifest, ManifestEntry};
pub use metrics::{auroc, eval_per_family, evaluate, metrics, BinaryMetrics, EvalReport, FamilyStats, DEFAULT_THRESHOLD};
pub use persist::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use train::{history_csv, train, train_with, EpochRecord, TrainConfig, TrainOutcome, VocabScope, HISTORY_CSV_HEADER};

pub use crate::sage::ModelParams;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Ir { path: PathBuf, source: IrError },
    #[error("{}: {source}", path.display())]
    Graph { path: PathBuf, source: GraphError },
    #[error("{}: malformed: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Encode {
        path: PathBuf,
        source: AnalyticsError,
    },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("AUROC needs at least one positive and one negative label")]
    SingleClass,
    #[error("unsupported model format version {0}")]
    VersionMismatch(u32),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sage(#[from] SageError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// A trained network together with the vocabulary it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub vocab: OpVocabulary,
}

/// Loads a graph from JSON, or compiles `.ll` / `.trace` input on the fly
/// with data edges only.
pub fn load_graph(path: &Path) -> Result<DepGraph> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("json") {
        return DepGraph::from_json(&text).map_err(|source| PipelineError::Graph {
            path: path.to_path_buf(),
            source,
        });
    }
    let unit = if ext.eq_ignore_ascii_case("ll") {
        parse_ll(&text, path)
    } else {
        parse_trace(&text, path)
    }
    .map_err(|source| PipelineError::Ir {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(build_graph(&unit, BuildOptions::default()))
}

/// Loads every entry in parallel and attaches the manifest label and family.
pub fn load_manifest_graphs(manifest: &Manifest) -> Result<Vec<DepGraph>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let g = load_graph(&e.path)?;
            if g.nodes.is_empty() {
                return Err(PipelineError::Graph {
                    path: e.path.clone(),
                    source: GraphError::EmptyGraph,
                });
            }
            Ok(g.with_label(Some(e.label), Some(e.family.clone())))
        })
        .collect()
}

/// Graphs scored per forward call; bounds activation memory.
const SCORE_CHUNK: usize = 64;

impl Model {
    pub fn encode(&self, g: &DepGraph) -> Result<GraphSample> {
        encode(g, &self.vocab).map_err(|source| PipelineError::Encode {
            path: g.origin.clone(),
            source,
        })
    }

    /// Malicious-class probabilities with full neighborhoods, in input order.
    pub fn score_samples(&self, samples: &[GraphSample]) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(SCORE_CHUNK) {
            scores.extend(forward(&self.params, chunk)?.scores);
        }
        Ok(scores)
    }

    pub fn score_graphs(&self, graphs: &[DepGraph]) -> Result<Vec<f64>> {
        let samples = graphs
            .par_iter()
            .map(|g| self.encode(g))
            .collect::<Result<Vec<_>>>()?;
        self.score_samples(&samples)
    }
}
