use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use restoration_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn problem(name: &str) -> String {
    let path = format!("{}/../../problems/{name}.json", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

fn app() -> Router {
    router(AppState::new(ServiceConfig::default()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(body.to_string())).await
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None).await
}

/// Polls a job until it leaves the building/solving phases.
async fn wait_for(app: &Router, job: &str) -> (StatusCode, Value) {
    for _ in 0..600 {
        let (status, body) = get(app, &format!("/jobs/{job}")).await;
        if body["status"] == "done" || body["status"] == "failed" {
            return (status, body);
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {job} did not finish");
}

async fn solved(app: &Router, name: &str, flags: &str) -> String {
    let (status, created) = call(app, "POST", "/problems", Some(problem(name))).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["id"].as_str().unwrap().to_string();
    let (status, job) = post(app, &format!("/problems/{id}/solve"), json!({ "flags": flags })).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (status, job) = wait_for(app, job["job_id"].as_str().unwrap()).await;
    assert_eq!(status, StatusCode::OK, "{job}");
    id
}

fn statuses(view: &Value) -> String {
    view["status"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect()
}

#[tokio::test]
async fn upload_reports_sizes_and_notes() {
    let app = app();
    let (status, body) = call(&app, "POST", "/problems", Some(problem("six_bus"))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["buses"], 6);
    assert_eq!(body["teams"], 2);
    assert!(body["notes"].is_array());
    let (status, fetched) = get(&app, &format!("/problems/{}", body["id"].as_str().unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched["solved"], false);
}

#[tokio::test]
async fn triangle_violation_names_the_axiom() {
    let doc = json!({
        "buses": [{"id": 1, "pf": 0.5}, {"id": 2, "pf": 0.5}, {"id": 3, "pf": 0.5}],
        "branches": [[1, 2], [2, 3]],
        "sources": [1],
        "teams": [{"start": 1}],
        "travel": {"matrix": [[0, 1, 5], [1, 0, 1], [5, 1, 0]]}
    });
    let (status, body) = post(&app(), "/problems", doc).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["axiom"], "triangle_inequality");
}

#[tokio::test]
async fn malformed_upload_is_a_bad_request() {
    let (status, body) = call(&app(), "POST", "/problems", Some("{\"buses\": 3".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.get("axiom").is_none());
}

#[tokio::test]
async fn midway_session_follows_reported_outcomes() {
    let app = app();
    let id = solved(&app, "six_bus_midway", "").await;
    let (status, view) = post(&app, "/sessions", json!({ "problem_id": id })).await;
    assert_eq!(status, StatusCode::CREATED);
    let session = view["session_id"].as_str().unwrap().to_string();
    let commands: Vec<&str> = view["commands"].as_array().unwrap().iter().map(|c| c["command"].as_str().unwrap()).collect();
    assert_eq!(commands, ["2", "C"]);
    assert_eq!(view["pending_buses"], json!([2, 3]));
    assert_eq!(statuses(&view), "EUUEDU");

    // A fresh session per branch of the outcome tree.
    let (_, view) = post(&app, "/sessions", json!({ "problem_id": id })).await;
    let other = view["session_id"].as_str().unwrap().to_string();

    let (status, next) = post(&app, &format!("/sessions/{session}/report"), json!({"2": "energized", "3": "energized"})).await;
    assert_eq!(status, StatusCode::OK, "{next}");
    assert_eq!(statuses(&next), "EEEEDU");
    assert_eq!(next["terminal"], true);
    assert_eq!(next["summary"]["energized"], 4);
    assert_eq!(next["summary"]["damaged"], 1);
    assert_eq!(next["last_step"]["changes"].as_array().unwrap().len(), 2);

    let (status, next) = post(&app, &format!("/sessions/{other}/report"), json!({"2": "damaged"})).await;
    assert_eq!(status, StatusCode::OK, "{next}");
    assert_eq!(statuses(&next), "EDUEDU");

    let (status, err) = post(&app, &format!("/sessions/{other}/report"), json!({"6": "energized"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    let (_, unchanged) = get(&app, &format!("/sessions/{other}")).await;
    assert_eq!(statuses(&unchanged), "EDUEDU");
}

#[tokio::test]
async fn impossible_outcome_is_unprocessable() {
    let app = app();
    let id = solved(&app, "six_bus_midway", "SPOW").await;
    let (_, view) = post(&app, "/sessions", json!({ "problem_id": id })).await;
    let session = view["session_id"].as_str().unwrap();
    // Bus 3 cannot energize while bus 2 is damaged.
    let (status, _) = post(&app, &format!("/sessions/{session}/report"), json!({"2": "damaged", "3": "energized"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post(&app, &format!("/sessions/{session}/report"), json!({"2": "flooded"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn what_if_lists_every_action() {
    let app = app();
    let id = solved(&app, "six_bus", "").await;
    let (_, view) = post(&app, "/sessions", json!({ "problem_id": id })).await;
    let session = view["session_id"].as_str().unwrap();
    let chosen = view["action"].as_u64().unwrap();
    let (status, option) = get(&app, &format!("/sessions/{session}/whatif?action={chosen}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(option["chosen"], true);
    let best = option["expected_cost"].as_f64().unwrap();
    assert!((best - view["expected_cost"].as_f64().unwrap()).abs() < 1e-9);
    for alt in view["alternatives"].as_array().unwrap() {
        assert!(alt["expected_cost"].as_f64().unwrap() >= best - 1e-9);
    }
    let (status, _) = get(&app, &format!("/sessions/{session}/whatif?action=9999")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_need_a_solved_problem() {
    let app = app();
    let (_, created) = call(&app, "POST", "/problems", Some(problem("six_bus"))).await;
    let (status, _) = post(&app, "/sessions", json!({ "problem_id": created["id"] })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = post(&app, "/sessions", json!({ "problem_id": "p404" })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&app, "/sessions/s404").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_solve_conflicts_and_cap_suggests_partitioning() {
    let app = app();
    let (_, created) = call(&app, "POST", "/problems", Some(problem("fifteen_bus"))).await;
    let id = created["id"].as_str().unwrap();
    let uri = format!("/problems/{id}/solve");
    let (status, job) = post(&app, &uri, json!({ "flags": "SPOW", "max_states": 200000 })).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (status, _) = post(&app, &uri, json!({ "flags": "SPOW" })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = wait_for(&app, job["job_id"].as_str().unwrap()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["status"], "failed");
    assert!(body["states_explored"].as_u64().unwrap() > 0);
    assert!(body["error"]["hint"].as_str().unwrap().contains("partition"));
}

#[tokio::test]
async fn solve_request_validation() {
    let app = app();
    let (_, created) = call(&app, "POST", "/problems", Some(problem("six_bus"))).await;
    let uri = format!("/problems/{}/solve", created["id"].as_str().unwrap());
    let (status, _) = post(&app, &uri, json!({ "flags": "SPX" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, &uri, json!({ "horizon": 0 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, "/problems/p404/solve", json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, job) = call(&app, "POST", &uri, None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (_, done) = wait_for(&app, job["job_id"].as_str().unwrap()).await;
    assert_eq!(done["result"]["flags"], "S+P+O+W");
    assert_eq!(done["result"]["policy_version"], 1);
}

#[tokio::test]
async fn partition_endpoint_reports_groups() {
    let app = app();
    let (_, created) = call(&app, "POST", "/problems", Some(problem("two_districts"))).await;
    let (status, report) = post(&app, &format!("/problems/{}/partition", created["id"].as_str().unwrap()), json!({})).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["groups"].as_array().unwrap().len(), 2);
    assert_eq!(report["severed_branches"], json!([]));
}

#[tokio::test]
async fn console_files_are_served_at_the_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>console</html>").unwrap();
    let config = ServiceConfig { static_dir: Some(dir.path().to_path_buf()), ..ServiceConfig::default() };
    let app = router(AppState::new(config));
    let response = app.clone().oneshot(Request::builder().uri("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let body = response.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>console</html>");
    // API routes still take precedence.
    let (status, _) = get(&app, "/sessions/s1").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
