//! The CLI and the HTTP service must produce identical numbers for identical
//! inputs. Each model is fitted twice, once per surface into separate stores,
//! and every stored document and output row is compared exactly.

mod common;

use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use uqnet::pipeline::{fit_dlms, read_rows_csv, CaseStudyConfig, CaseStudyData, ForecastRow, ModelStore};
use uqnet_server::{router, AppState};

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Value {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    assert!(status == StatusCode::OK || status == StatusCode::CREATED, "{uri}: {status} {value}");
    value
}

fn read_fixture(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn stored(store: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(store.join(file)).unwrap()).unwrap()
}

fn cli_rows(store: &Path, args: &[&str]) -> Vec<ForecastRow> {
    read_rows_csv(ok(&uqnet(store, args)).as_bytes()).unwrap()
}

fn http_rows(value: Value) -> Vec<ForecastRow> {
    serde_json::from_value(value).unwrap()
}

fn assert_bitwise(cli: &[ForecastRow], http: &[ForecastRow]) {
    assert_eq!(cli.len(), http.len());
    for (a, b) in cli.iter().zip(http) {
        assert_eq!((&a.scenario, &a.quarter, a.step_kind, &a.model), (&b.scenario, &b.quarter, b.step_kind, &b.model));
        assert_eq!(a.mean.to_bits(), b.mean.to_bits(), "{a:?} vs {b:?}");
        assert_eq!(a.variance.to_bits(), b.variance.to_bits(), "{a:?} vs {b:?}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cli_and_http_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cli_store = dir.path().join("cli");
    let http_store = dir.path().join("http");
    let app = router(AppState::new(ModelStore::open(&http_store).unwrap(), Duration::from_secs(300)));

    for (cmd, file) in [("fit-gp", "gp_1d.json"), ("fit-gp", "gp_2d.json"), ("fit-dlm", "dlm.json")] {
        ok(&uqnet(&cli_store, &[cmd, "--config", path_str(&fixture(file))]));
    }
    ok(&uqnet(&cli_store, &["build-graph", "--config", path_str(&fixture("graph.json"))]));
    call(&app, Method::POST, "/models/gp", Some(read_fixture("gp_1d.json"))).await;
    call(&app, Method::POST, "/models/gp", Some(read_fixture("gp_2d.json"))).await;
    call(&app, Method::POST, "/models/dlm", Some(read_fixture("dlm.json"))).await;
    call(&app, Method::POST, "/graphs", Some(read_fixture("graph.json"))).await;

    for (id, file) in [("em1", "em1.gp.json"), ("em2", "em2.gp.json"), ("lvl", "lvl.dlm.json"), ("net", "net.graph.json")] {
        let via_http = call(&app, Method::GET, &format!("/models/{id}"), None).await;
        assert_eq!(stored(&cli_store, file), via_http, "{id}");
    }

    let cli = cli_rows(&cli_store, &["forecast", "--model-id", "net", "--horizon", "4", "--parents"]);
    let http = call(&app, Method::POST, "/graphs/net/forecast", Some(json!({"horizon": 4, "parents": true}))).await;
    assert_eq!(cli.len(), 16);
    assert_bitwise(&cli, &http_rows(http));

    let scenario = fixture("scenario.json");
    let cli = cli_rows(&cli_store, &["scenario", "run", "--model-id", "net", "--scenario", path_str(&scenario)]);
    let http = call(&app, Method::POST, "/graphs/net/scenario", Some(read_fixture("scenario.json"))).await;
    assert_bitwise(&cli, &http_rows(http));

    let cli: Value = serde_json::from_str(&ok(&uqnet(&cli_store, &["diagnostics", "--model-id", "em2"]))).unwrap();
    let http = call(&app, Method::GET, "/models/em2/diagnostics", None).await;
    assert_eq!(cli, http);
}

#[test]
fn csv_sourced_dlm_matches_the_study_fit() {
    let dir = tempfile::tempdir().unwrap();
    let summary: Value =
        serde_json::from_str(&ok(&uqnet(dir.path(), &["fit-dlm", "--config", path_str(&fixture("gas_dlm.json")), "--model-id", "gas"])))
            .unwrap();
    let cfg = CaseStudyConfig::load(&data("case_study.json")).unwrap();
    let (gas, _) = fit_dlms(&CaseStudyData::load(&cfg).unwrap(), cfg.dlm_prior).unwrap();
    assert_eq!(summary["V"].as_f64().unwrap().to_bits(), gas.fit.v.to_bits());
    assert_eq!(summary["w"].as_f64().unwrap().to_bits(), gas.fit.w.to_bits());
    assert_eq!(summary["data_digest"], gas.model.data_digest);
}

#[test]
fn stored_study_graph_matches_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("case_study.json");
    ok(&uqnet(dir.path(), &["case-study", "--config", path_str(&cfg), "--model-id", "study"]));
    let stored = cli_rows(dir.path(), &["scenario", "run", "--model-id", "study", "--scenario", "scenario3", "--horizon", "4"]);
    let fresh = cli_rows(
        dir.path(),
        &["scenario", "run", "--config", path_str(&cfg), "--scenario", "scenario3", "--horizon", "4"],
    );
    assert_bitwise(&stored, &fresh);
}
