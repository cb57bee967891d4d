use std::ffi::{CStr, CString};
use std::ptr;

use irgraph_ffi::*;

const SUB_CHAIN: &str = "%3 = sub i32 %1, %2\n%5 = sub i32 %3, %4\n";

fn trace_graph(text: &str) -> *mut IrgGraph {
    let text = CString::new(text).unwrap();
    let mut g = ptr::null_mut();
    let st = unsafe { irg_graph_from_trace(text.as_ptr(), IrgBuildOptions::default(), &mut g) };
    assert_eq!(st, IrgStatus::Ok);
    assert!(!g.is_null());
    g
}

#[test]
fn graph_counts_json_and_features() {
    let g = trace_graph(SUB_CHAIN);
    let (mut n, mut e) = (0usize, 0usize);
    unsafe {
        assert_eq!(irg_graph_node_count(g, &mut n), IrgStatus::Ok);
        assert_eq!(irg_graph_edge_count(g, &mut e), IrgStatus::Ok);
    }
    assert_eq!((n, e), (2, 1));

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { irg_graph_to_json(g, &mut s) }, IrgStatus::Ok);
    let json = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { irg_string_free(s) };
    assert!(json.contains(r#""edges":[{"src":0,"dst":1,"w":4,"kind":"data"}]"#), "{json}");

    let mut f = IrgTopoFeatures::default();
    assert_eq!(unsafe { irg_graph_topo_features(g, &mut f) }, IrgStatus::Ok);
    assert_eq!((f.num_nodes, f.num_edges), (2, 1));
    assert_eq!(f.avg_degree_centrality, 1.0);
    unsafe { irg_graph_free(g) };
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("%1 = add i32 %a,\n").unwrap();
    let mut g = ptr::null_mut();
    let st = unsafe { irg_graph_from_trace(bad.as_ptr(), IrgBuildOptions::default(), &mut g) };
    assert_eq!(st, IrgStatus::Parse);
    assert!(g.is_null());
    let msg = unsafe { CStr::from_ptr(irg_last_error()) }.to_str().unwrap();
    assert!(msg.contains("line 1"), "{msg}");

    let st = unsafe { irg_graph_from_ll(ptr::null(), IrgBuildOptions::default(), &mut g) };
    assert_eq!(st, IrgStatus::NullPointer);

    let mut n = 0usize;
    assert_eq!(unsafe { irg_graph_node_count(ptr::null(), &mut n) }, IrgStatus::NullPointer);

    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { irg_model_load(missing.as_ptr(), &mut m) }, IrgStatus::Io);

    unsafe {
        irg_graph_free(ptr::null_mut());
        irg_model_free(ptr::null_mut());
        irg_string_free(ptr::null_mut());
    }
}

#[test]
fn auroc_through_the_abi() {
    let scores = [0.9, 0.8, 0.85, 0.3];
    let labels = [1u8, 1, 0, 0];
    let mut a = 0.0;
    assert_eq!(
        unsafe { irg_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut a) },
        IrgStatus::Ok
    );
    assert_eq!(a, 0.75);
    let one_class = [1u8; 4];
    assert_eq!(
        unsafe { irg_auroc(scores.as_ptr(), one_class.as_ptr(), 4, &mut a) },
        IrgStatus::SingleClass
    );
    let bad = [2u8, 0, 1, 0];
    assert_eq!(
        unsafe { irg_auroc(scores.as_ptr(), bad.as_ptr(), 4, &mut a) },
        IrgStatus::InvalidArgument
    );
}

#[test]
fn model_predicts_through_the_abi() {
    use irgraph::analytics::build_vocab;
    use irgraph::pipeline::{save_model, Model};
    use irgraph::sage::{init_params, ArchConfig};

    let g = trace_graph(SUB_CHAIN);
    let dg = irgraph::depgraph::build_graph(
        &irgraph::ir::parse_trace(SUB_CHAIN, "t.trace").unwrap(),
        Default::default(),
    );
    let vocab = build_vocab([&dg]).unwrap();
    let arch = ArchConfig {
        embed_dim: 4,
        hidden_dim: 4,
        ..ArchConfig::new(vocab.len())
    };
    let model = Model {
        params: init_params(&arch, 3).unwrap(),
        vocab,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&model, &path).unwrap();
    let expected = model.score_graphs(&[dg]).unwrap()[0];

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { irg_model_load(cpath.as_ptr(), &mut m) }, IrgStatus::Ok);
    let mut score = -1.0;
    assert_eq!(unsafe { irg_model_predict(m, g, &mut score) }, IrgStatus::Ok);
    assert_eq!(score, expected);
    assert!((0.0..=1.0).contains(&score));
    unsafe {
        irg_model_free(m);
        irg_graph_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/irgraph.h")).unwrap();
    for name in [
        "typedef struct IrgGraph IrgGraph",
        "typedef struct IrgModel IrgModel",
        "IRG_STATUS_OK = 0",
        "irg_graph_from_trace",
        "irg_model_predict",
        "irg_auroc",
        "irg_last_error",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
