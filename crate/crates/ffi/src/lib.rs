//! C ABI over `irgraph`.
//!
//! Every fallible call returns an [`IrgStatus`] and writes its result
//! through an out-pointer. On failure, [`irg_last_error`] describes the
//! most recent error on the calling thread. Handles are opaque and must be
//! released with the matching `*_free` function; strings returned by the
//! library are released with [`irg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use irgraph::analytics::topo_features;
use irgraph::depgraph::{build_graph, BuildOptions, DepGraph, Label};
use irgraph::ir::{parse_ll, parse_trace};
use irgraph::pipeline::{auroc, load_graph, load_model, Model, PipelineError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    InvalidGraph = 5,
    InvalidModel = 6,
    InvalidArgument = 7,
    SingleClass = 8,
    Panic = 99,
}

/// A dependency graph.
pub struct IrgGraph {
    inner: DepGraph,
}

/// A trained classifier with its opcode vocabulary.
pub struct IrgModel {
    inner: Model,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IrgBuildOptions {
    pub control_edges: bool,
    pub memory_edges: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IrgTopoFeatures {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree_centrality: f64,
    pub avg_closeness_centrality: f64,
    pub avg_betweenness_centrality: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(IrgStatus, String);

impl From<PipelineError> for Fail {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Io { .. } => IrgStatus::Io,
            PipelineError::Ir { .. } => IrgStatus::Parse,
            PipelineError::Graph { .. } | PipelineError::Encode { .. } => IrgStatus::InvalidGraph,
            PipelineError::SingleClass => IrgStatus::SingleClass,
            PipelineError::Malformed { .. }
            | PipelineError::VersionMismatch(_)
            | PipelineError::Sage(_) => IrgStatus::InvalidModel,
            _ => IrgStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IrgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IrgStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IrgStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(IrgStatus::NullPointer, "null pointer argument".into())
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IrgStatus::InvalidUtf8, "string is not UTF-8".into()))
}

/// # Safety
/// `p` must be null or valid for reads.
unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn irg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn irg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn graph_from_text(
    text: *const c_char,
    origin: &str,
    is_trace: bool,
    opts: IrgBuildOptions,
    out: *mut *mut IrgGraph,
) -> IrgStatus {
    guard(|| {
        let text = unsafe { str_arg(text)? };
        let unit = if is_trace {
            parse_trace(text, origin)
        } else {
            parse_ll(text, origin)
        }
        .map_err(|e| Fail(IrgStatus::Parse, e.to_string()))?;
        let g = build_graph(
            &unit,
            BuildOptions {
                control_edges: opts.control_edges,
                memory_edges: opts.memory_edges,
            },
        );
        unsafe { put(out, Box::into_raw(Box::new(IrgGraph { inner: g }))) }
    })
}

/// Parses `.ll` text and builds its dependency graph.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_from_ll(
    text: *const c_char,
    opts: IrgBuildOptions,
    out: *mut *mut IrgGraph,
) -> IrgStatus {
    graph_from_text(text, "<memory>.ll", false, opts, out)
}

/// Parses dynamic-trace text and builds its dependency graph.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_from_trace(
    text: *const c_char,
    opts: IrgBuildOptions,
    out: *mut *mut IrgGraph,
) -> IrgStatus {
    graph_from_text(text, "<memory>.trace", true, opts, out)
}

/// Loads a graph JSON file, or compiles a `.ll` / `.trace` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_load(path: *const c_char, out: *mut *mut IrgGraph) -> IrgStatus {
    guard(|| {
        let path = str_arg(path)?;
        let g = load_graph(Path::new(path))?;
        put(out, Box::into_raw(Box::new(IrgGraph { inner: g })))
    })
}

/// Canonical JSON form of a graph. Free the result with `irg_string_free`.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_to_json(graph: *const IrgGraph, out: *mut *mut c_char) -> IrgStatus {
    guard(|| {
        let g = ref_arg(graph)?;
        let s = CString::new(g.inner.to_json()).expect("JSON has no interior NUL");
        put(out, s.into_raw())
    })
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_node_count(graph: *const IrgGraph, out: *mut usize) -> IrgStatus {
    guard(|| put(out, ref_arg(graph)?.inner.num_nodes()))
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_edge_count(graph: *const IrgGraph, out: *mut usize) -> IrgStatus {
    guard(|| put(out, ref_arg(graph)?.inner.num_edges()))
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_topo_features(
    graph: *const IrgGraph,
    out: *mut IrgTopoFeatures,
) -> IrgStatus {
    guard(|| {
        let g = ref_arg(graph)?;
        let f = topo_features(&g.inner).map_err(|e| Fail(IrgStatus::InvalidGraph, e.to_string()))?;
        put(
            out,
            IrgTopoFeatures {
                num_nodes: f.num_nodes,
                num_edges: f.num_edges,
                avg_degree_centrality: f.avg_degree_centrality,
                avg_closeness_centrality: f.avg_closeness_centrality,
                avg_betweenness_centrality: f.avg_betweenness_centrality,
            },
        )
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irg_graph_free(graph: *mut IrgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_model_load(path: *const c_char, out: *mut *mut IrgModel) -> IrgStatus {
    guard(|| {
        let path = str_arg(path)?;
        let m = load_model(Path::new(path))?;
        put(out, Box::into_raw(Box::new(IrgModel { inner: m })))
    })
}

/// Malicious-class probability of one graph.
///
/// # Safety
/// `model` and `graph` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irg_model_predict(
    model: *const IrgModel,
    graph: *const IrgGraph,
    out: *mut f64,
) -> IrgStatus {
    guard(|| {
        let m = ref_arg(model)?;
        let g = ref_arg(graph)?;
        let scores = m.inner.score_graphs(std::slice::from_ref(&g.inner))?;
        put(out, scores[0])
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irg_model_free(model: *mut IrgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Mann–Whitney AUROC of `len` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must each point to `len` readable elements.
#[no_mangle]
pub unsafe extern "C" fn irg_auroc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> IrgStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() {
            return Err(null());
        }
        let scores = std::slice::from_raw_parts(scores, len);
        let labels = std::slice::from_raw_parts(labels, len)
            .iter()
            .map(|&l| {
                Label::from_u8(l)
                    .ok_or_else(|| Fail(IrgStatus::InvalidArgument, format!("label {l} is not 0 or 1")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        put(out, auroc(scores, &labels)?)
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
