use std::collections::BTreeMap;

use uqnet::dlm::{fit_random_walk, PrecisionFitConfig, PrecisionPrior};
use uqnet::gp::{Design, Domain, GpEmulator, KernelSpec, TrendBasis};
use uqnet::pipeline::store::{gp_from_json, gp_to_json, NodeDocument, NodeType, DOCUMENT_VERSION};
use uqnet::pipeline::{DocumentKind, GraphDocument, ModelStore};
use uqnet::Error;

fn emulator() -> GpEmulator {
    let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.5, (i * i % 7) as f64]).collect();
    let f: Vec<f64> = rows.iter().map(|r| r[0].sin() + 0.1 * r[1]).collect();
    let design = Design::from_rows(&rows, &f, vec![Domain::new(0.0, 4.0), Domain::new(0.0, 6.0)]).unwrap();
    GpEmulator::condition(design, TrendBasis::ConstantLinear, KernelSpec::new(vec![0.3, 0.4], 1e-6).unwrap()).unwrap()
}

fn store() -> (tempfile::TempDir, ModelStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path().join("models")).unwrap();
    (dir, store)
}

#[test]
fn gp_round_trip_is_exact() {
    let (_dir, store) = store();
    let em = emulator();
    store.save_gp("heat", &em, false).unwrap();
    let back = store.load_gp("heat").unwrap();
    for x in [[0.1, 0.2], [3.3, 5.9], [2.0, 3.0]] {
        assert_eq!(em.predict(&x).unwrap(), back.predict(&x).unwrap());
    }
    let (kind, doc) = store.document("heat").unwrap();
    assert_eq!(kind, DocumentKind::Gp);
    assert_eq!(doc["version"], DOCUMENT_VERSION);
    assert_eq!(doc["trend"], "constant+linear");
    assert!(doc.get("chol").is_none());
}

#[test]
fn dlm_round_trip_is_exact() {
    let (_dir, store) = store();
    let ys: Vec<Option<f64>> = (0..12).map(|t| Some(1.0 + 0.1 * t as f64 + if t % 3 == 0 { 0.2 } else { -0.1 })).collect();
    let regs: Vec<Vec<f64>> = (0..12).map(|t| vec![1.0, (t as f64 * 0.7).cos()]).collect();
    let fitted = fit_random_walk(
        vec!["intercept".into(), "ets".into()],
        vec![1.0, 1.0],
        &ys,
        &regs,
        PrecisionPrior::default(),
        PrecisionFitConfig::default(),
    )
    .unwrap();
    store.save_dlm("gas", &fitted.model, false).unwrap();
    let back = store.load_dlm("gas").unwrap();
    let future = vec![vec![1.0, 0.3]; 5];
    assert_eq!(fitted.model.forecast(5, &future).unwrap(), back.forecast(5, &future).unwrap());
    assert_eq!(back.data_digest, fitted.model.data_digest);
}

#[test]
fn ids_are_unique_across_kinds() {
    let (_dir, store) = store();
    let em = emulator();
    store.save_gp("m1", &em, false).unwrap();
    assert!(matches!(store.save_gp("m1", &em, false).unwrap_err(), Error::AlreadyExists(_)));
    store.save_gp("m1", &em, true).unwrap();
    let doc = GraphDocument {
        version: DOCUMENT_VERSION,
        kind: "graph".into(),
        id: "m1".into(),
        target: "x".into(),
        nodes: vec![],
        exogenous: BTreeMap::new(),
        first_quarter: None,
    };
    assert!(matches!(store.save_graph(&doc, true).unwrap_err(), Error::AlreadyExists(_)));
    assert_eq!(store.list().unwrap(), vec![("m1".to_string(), DocumentKind::Gp)]);
}

#[test]
fn missing_and_invalid_ids() {
    let (_dir, store) = store();
    let err = store.load_gp("nope").unwrap_err();
    assert!(matches!(err.root(), Error::NotFound(_)));
    assert_eq!(err.code(), "not_found");
    for bad in ["", "../etc", "a b", "-x"] {
        assert!(store.save_gp(bad, &emulator(), false).unwrap_err().is_validation(), "{bad:?}");
    }
}

#[test]
fn version_mismatch_names_the_version() {
    let text = gp_to_json(&emulator()).unwrap().replacen("\"version\": 1", "\"version\": 7", 1);
    let err = gp_from_json(&text).unwrap_err();
    assert!(matches!(err, Error::Version { found: 7, expected: 1 }));
    assert!(err.to_string().contains('7'));
}

#[test]
fn truncated_file_is_corrupt() {
    let (_dir, store) = store();
    store.save_gp("heat", &emulator(), false).unwrap();
    let path = store.dir().join("heat.gp.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let err = store.load_gp("heat").unwrap_err();
    assert_eq!(err.code(), "corrupt_document", "{err}");
}

#[test]
fn tampered_coefficients_are_detected() {
    let text = gp_to_json(&emulator()).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["beta_hat"][0] = serde_json::json!(123.0);
    let err = gp_from_json(&doc.to_string()).unwrap_err();
    assert_eq!(err.code(), "corrupt_document");
    doc["kind"] = serde_json::json!("dlm");
    assert_eq!(gp_from_json(&doc.to_string()).unwrap_err().code(), "corrupt_document");
}

#[test]
fn graph_documents_resolve_stored_models() {
    let (_dir, store) = store();
    store.save_gp("em", &emulator(), false).unwrap();
    let node = |id: &str, node_type: NodeType, model: Option<&str>, inputs: &[&str]| NodeDocument {
        id: id.into(),
        node_type,
        model: model.map(String::from),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
    };
    let doc = GraphDocument {
        version: DOCUMENT_VERSION,
        kind: "graph".into(),
        id: "g".into(),
        target: "y".into(),
        nodes: vec![
            node("a", NodeType::Exogenous, None, &[]),
            node("b", NodeType::Exogenous, None, &[]),
            node("y", NodeType::Gp, Some("em"), &["a", "b"]),
        ],
        exogenous: BTreeMap::from([("a".into(), vec![1.0]), ("b".into(), vec![2.0])]),
        first_quarter: Some("2022-Q1".into()),
    };
    store.save_graph(&doc, false).unwrap();
    let back = store.load_graph("g").unwrap();
    assert_eq!(back, doc);
    let graph = back.build(&store).unwrap();
    assert_eq!(graph.order(), vec!["a", "b", "y"]);

    let mut dangling = doc.clone();
    dangling.id = "g2".into();
    dangling.nodes[2].model = Some("missing".into());
    assert_eq!(dangling.build(&store).unwrap_err().code(), "not_found");
}

#[test]
fn writes_leave_no_temporary_files() {
    let (_dir, store) = store();
    for i in 0..5 {
        store.save_gp(&format!("m{i}"), &emulator(), false).unwrap();
    }
    let names: Vec<String> = std::fs::read_dir(store.dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 5);
    assert!(names.iter().all(|n| n.ends_with(".gp.json")));
}
