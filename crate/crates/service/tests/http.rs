use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use tox2_service::{router, Options};

fn app() -> Router {
    router(&Options::default())
}

fn table_config(rule: &str) -> Value {
    json!({
        "theta01": 0.2, "theta02": 0.2, "tau": 0.98, "maxN1": 20, "maxN2": 20,
        "prior": { "p1": 0.2, "p2": 0.2, "ess": 3, "rho": 0.5 },
        "rule": rule
    })
}

fn state(n1: u32, k1: u32, n2: u32, k2: u32) -> Value {
    json!({ "data": { "n1": n1, "k1": k1, "n2": n2, "k2": k2 }, "status1": "active", "status2": "active" })
}

async fn send(app: Router, method: Method, uri: &str, body: Option<String>, content_type: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header(header::CONTENT_TYPE, ct);
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn post(uri: &str, body: Value) -> (StatusCode, Value) {
    send(app(), Method::POST, uri, Some(body.to_string()), Some("application/json")).await
}

fn assert_error_shape(v: &Value) {
    assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
    assert!(v.get("details").is_some(), "{v}");
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, v) = send(app(), Method::GET, "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert!(v["version"].is_string());
}

#[tokio::test]
async fn decision_stops_cohort_one_at_the_boundary() {
    let (status, v) = post("/api/v1/decision", json!({ "config": table_config("correlated"), "state": state(6, 5, 6, 0) })).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["rule"], "correlated");
    assert_eq!(v["perCohort"][0]["stop"], true);
    assert_eq!(v["perCohort"][0]["boundaryK"], 5);
    assert_eq!(v["perCohort"][1]["stop"], false);
    let rules: Vec<&str> = v["ruleComparison"].as_array().unwrap().iter().map(|r| r["rule"].as_str().unwrap()).collect();
    assert_eq!(rules, ["correlated", "independent", "pooled"]);
    assert_eq!(v["ruleComparison"][0]["perCohort"], v["perCohort"]);

    let (_, v) = post("/api/v1/decision", json!({ "config": table_config("correlated"), "state": state(6, 4, 6, 0) })).await;
    assert_eq!(v["perCohort"][0]["stop"], false);
}

#[tokio::test]
async fn decision_on_empty_trial_continues_under_every_rule() {
    let (status, v) = post("/api/v1/decision", json!({ "config": table_config("pooled"), "state": state(0, 0, 0, 0) })).await;
    assert_eq!(status, StatusCode::OK);
    for r in v["ruleComparison"].as_array().unwrap() {
        for c in r["perCohort"].as_array().unwrap() {
            assert_eq!(c["stop"], false);
            assert!(c["boundaryK"].is_null());
        }
    }
}

#[tokio::test]
async fn decision_matches_the_core() {
    let cfg: tox2::monitoring::TrialConfig<f64> = serde_json::from_value(table_config("correlated")).unwrap();
    let st = tox2::monitoring::TrialState::from_data(&cfg, tox2::DataSummary::new(9, 3, 7, 4).unwrap()).unwrap();
    let core = tox2::monitoring::decide(&cfg, &st).unwrap();
    let (_, v) = post("/api/v1/decision", json!({ "config": cfg, "state": st })).await;
    for i in 0..2 {
        assert_eq!(v["perCohort"][i]["exceedance"].as_f64().unwrap(), core.per_cohort[i].exceedance);
    }
}

#[tokio::test]
async fn infeasible_prior_is_422_with_the_interval() {
    let mut cfg = table_config("correlated");
    cfg["prior"]["rho"] = json!(-0.9);
    let (status, v) = post("/api/v1/decision", json!({ "config": cfg, "state": state(0, 0, 0, 0) })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
    assert_eq!(v["code"], "infeasible_correlation");
    assert!((v["details"]["feasibleRho"]["lo"].as_f64().unwrap() + 0.25).abs() < 1e-12);
    assert_eq!(v["details"]["feasibleRho"]["hi"].as_f64().unwrap(), 1.0);
}

#[tokio::test]
async fn malformed_and_mistyped_bodies() {
    let (status, v) =
        send(app(), Method::POST, "/api/v1/decision", Some("{not json".into()), Some("application/json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);
    assert_eq!(v["code"], "malformed_json");

    let (status, v) = post("/api/v1/decision", json!({ "config": table_config("correlated") })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "invalid_body");

    let mut cfg = table_config("correlated");
    cfg["surprise"] = json!(1);
    let (status, _) = post("/api/v1/decision", json!({ "config": cfg, "state": state(0, 0, 0, 0) })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let body = json!({ "config": table_config("correlated"), "state": state(0, 0, 0, 0) }).to_string();
    let (status, v) = send(app(), Method::POST, "/api/v1/decision", Some(body), Some("text/plain")).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_error_shape(&v);

    let (status, v) = post("/api/v1/nowhere", json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
}

#[tokio::test]
async fn inconsistent_state_is_422() {
    let (status, v) = post("/api/v1/decision", json!({ "config": table_config("correlated"), "state": state(3, 4, 0, 0) })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
}

#[tokio::test]
async fn whatif_projects_one_patient_per_cohort() {
    let body = json!({ "config": table_config("correlated"), "state": state(5, 4, 5, 0), "horizon": 1 });
    let (status, v) = post("/api/v1/whatif", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|r| r.as_array().unwrap().len() == 2));
    let cell = &cells[1][0];
    assert_eq!(cell["data"], json!({ "n1": 6, "k1": 5, "n2": 6, "k2": 0 }));
    assert_eq!(cell["perCohort"][0]["stop"], true);
    assert_eq!(cells[0][0]["perCohort"][0]["stop"], false);
}

#[tokio::test]
async fn whatif_horizon_zero_equals_decision() {
    let cfg = table_config("independent");
    let (_, w) = post("/api/v1/whatif", json!({ "config": cfg, "state": state(7, 2, 4, 1), "horizon": 0 })).await;
    let (_, d) = post("/api/v1/decision", json!({ "config": cfg, "state": state(7, 2, 4, 1) })).await;
    let cells = w["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    for i in 0..2 {
        let c = &cells[0][0]["perCohort"][i];
        assert_eq!(c["exceedance"], d["perCohort"][i]["exceedance"]);
        assert_eq!(c["stop"], d["perCohort"][i]["stop"]);
    }
}

#[tokio::test]
async fn whatif_dimensions_and_capacity() {
    let (_, v) = post("/api/v1/whatif", json!({ "config": table_config("pooled"), "state": state(2, 0, 3, 1), "horizon": 3 })).await;
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|r| r.as_array().unwrap().len() == 4));

    let (status, v) =
        post("/api/v1/whatif", json!({ "config": table_config("pooled"), "state": state(18, 0, 3, 1), "horizon": 3 })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "horizon_exceeds_capacity");
}

#[tokio::test]
async fn boundary_table_matches_the_printed_row() {
    let (status, v) = post("/api/v1/boundary-table", json!({ "config": table_config("correlated"), "nMax": 10 })).await;
    assert_eq!(status, StatusCode::OK);
    let t: tox2::BoundaryTable = serde_json::from_value(v).unwrap();
    let csv = t.to_csv();
    assert!(csv.lines().nth(1).unwrap() == "0,none,none,none,4,4,5,5,6,6,6", "{csv}");
}

#[tokio::test]
async fn oc_rows_and_caps() {
    let body = json!({ "config": table_config("independent"), "theta1": [0.2, 0.3], "theta2": [0.1, 0.4] });
    let (status, v) = post("/api/v1/oc", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    // cohort-1 columns do not depend on theta2 under the independent rule
    let s = |i: usize| rows[i]["result"]["stopProb1"].as_f64().unwrap();
    assert!((s(0) - s(2)).abs() < 1e-14, "{} vs {}", s(0), s(2));

    let mut cfg = table_config("correlated");
    cfg["maxN1"] = json!(200);
    let (status, v) = post("/api/v1/oc", json!({ "config": cfg, "theta1": [0.2], "theta2": [0.2] })).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error_shape(&v);

    let grid: Vec<f64> = (0..11).map(|i| i as f64 / 20.0).collect();
    let (status, _) = post("/api/v1/oc", json!({ "config": table_config("correlated"), "theta1": grid, "theta2": grid })).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn calibrate_endpoint() {
    let body = json!({ "config": table_config("correlated"), "targetAlpha": 0.1, "theta2": 0.2 });
    let (status, v) = post("/api/v1/calibrate", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["rule"], "correlated");
    assert!(v["achievedAlpha"].as_f64().unwrap() <= 0.1);
    let tau = v["tau"].as_f64().unwrap();
    assert!((0.5..1.0).contains(&tau));

    let body = json!({ "config": table_config("correlated"), "targetAlpha": 1e-12, "theta2": 0.2 });
    let (status, v) = post("/api/v1/calibrate", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "infeasible_calibration");
}

#[tokio::test]
async fn oversized_body_is_413() {
    let app = router(&Options { body_limit: 64, ..Options::default() });
    let body = json!({ "config": table_config("correlated"), "state": state(0, 0, 0, 0) }).to_string();
    let (status, v) = send(app, Method::POST, "/api/v1/decision", Some(body), Some("application/json")).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error_shape(&v);
}

#[tokio::test]
async fn responses_do_not_depend_on_request_history() {
    let a = json!({ "config": table_config("correlated"), "state": state(6, 5, 6, 0) });
    let b = json!({ "config": table_config("pooled"), "state": state(3, 1, 9, 6) });
    let alone = post("/api/v1/decision", a.clone()).await;
    let app = app();
    for body in [&b, &a, &b] {
        let _ = send(app.clone(), Method::POST, "/api/v1/decision", Some(body.to_string()), Some("application/json")).await;
    }
    let after = send(app, Method::POST, "/api/v1/decision", Some(a.to_string()), Some("application/json")).await;
    assert_eq!(alone, after);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/v1/decision")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}
