use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use depthscope::dataset::{generate_synthetic, to_json_bytes, SyntheticSpec};
use depthscope::service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn bimodal_body() -> Vec<u8> {
    to_json_bytes(&generate_synthetic(&SyntheticSpec::bimodal(40), 7).unwrap())
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: Vec<u8>) -> Request<Body> {
    Request::post("/api/datasets")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

async fn upload_and_wait(app: &Router, body: Vec<u8>) -> String {
    let (status, _, bytes) = call(app, post(body)).await;
    assert!(status == StatusCode::CREATED || status == StatusCode::OK, "{status}");
    let id = json(&bytes)["id"].as_str().unwrap().to_string();
    for _ in 0..600 {
        let (_, _, bytes) = call(app, get(&format!("/api/datasets/{id}"))).await;
        if json(&bytes)["status"] == "ready" {
            return id;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("build did not finish");
}

fn app(config: ServiceConfig) -> Router {
    router(AppState::new(config).unwrap())
}

#[tokio::test]
async fn upload_is_content_addressed() {
    let app = app(ServiceConfig::default());
    let (status, _, first) = call(&app, post(bimodal_body())).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _, second) = call(&app, post(bimodal_body())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&first)["id"], json(&second)["id"]);
    let (_, _, list) = call(&app, get("/api/datasets")).await;
    let list = json(&list);
    assert_eq!(list["datasets"].as_array().unwrap().len(), 1);
    assert_eq!(list["datasets"][0]["id"], json(&first)["id"]);
}

#[tokio::test]
async fn bad_uploads() {
    let app = app(ServiceConfig {
        max_body_bytes: 256,
        ..ServiceConfig::default()
    });
    let (status, _, body) = call(&app, post(b"{not json".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json(&body)["error"].is_string());
    let (status, _, _) = call(&app, post(bimodal_body())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn snapshot_endpoints() {
    let app = app(ServiceConfig::default());
    let id = upload_and_wait(&app, bimodal_body()).await;
    let uri = format!("/api/datasets/{id}/snapshot?tau=q:0.25");
    let (status, headers, body) = call(&app, get(&uri)).await;
    assert_eq!(status, StatusCode::OK);
    let snap = json(&body);
    assert_eq!(snap["schemaVersion"], 1);
    assert_eq!(snap["spectral"]["labels"].as_array().unwrap().len(), 40);
    assert_eq!(snap["spectral"]["order"].as_array().unwrap().len(), 40);
    assert_eq!(snap["layout"]["positions"].as_array().unwrap().len(), 40);
    let etag = headers[header::ETAG].to_str().unwrap().to_string();

    let again = Request::get(&uri).header(header::IF_NONE_MATCH, &etag).body(Body::empty()).unwrap();
    let (status, _, body) = call(&app, again).await;
    assert_eq!(status, StatusCode::NOT_MODIFIED);
    assert!(body.is_empty());

    let (status, headers2, _) = call(&app, get(&uri)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers2[header::ETAG].to_str().unwrap(), etag);

    let (status, _, _) = call(&app, get(&format!("/api/datasets/{id}/snapshot?tau=q:2.0"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&app, get(&format!("/api/datasets/{id}/snapshot?tau=-3"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&app, get(&format!("/api/datasets/{id}/snapshot?k=0"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&app, get("/api/datasets/deadbeef/snapshot")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _, body) = call(&app, get(&format!("/api/datasets/{id}/histogram"))).await;
    assert_eq!(status, StatusCode::OK);
    let hist = json(&body);
    let total: u64 = hist["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, hist["bandCount"].as_u64().unwrap());

    let (status, _, body) = call(&app, get(&format!("/api/datasets/{id}/similarity?tau=q:0.25"))).await;
    assert_eq!(status, StatusCode::OK);
    let sim = json(&body);
    assert_eq!(sim["order"], snap["spectral"]["order"]);
    assert_eq!(sim["values"].as_array().unwrap().len(), 40);

    let (status, _, body) = call(&app, get(&format!("/api/datasets/{id}/summaries?tau=q:0.25"))).await;
    assert_eq!(status, StatusCode::OK);
    let sums = json(&body);
    assert_eq!(sums["summaries"][0]["kind"], "scalar");
    assert_eq!(sums["bins"], snap["coloring"]["bin"]);
}

#[tokio::test]
async fn concurrent_reads_agree() {
    let state = AppState::new(ServiceConfig::default()).unwrap();
    let app = router(state.clone());
    let id = upload_and_wait(&app, bimodal_body()).await;
    let uris: Vec<String> = ["q:0.25", "q:0.5", "inf", "q:0.25"]
        .iter()
        .map(|t| format!("/api/datasets/{id}/snapshot?tau={t}"))
        .collect();
    let handles: Vec<_> = uris
        .iter()
        .map(|u| {
            let app = app.clone();
            let u = u.clone();
            tokio::spawn(async move { call(&app, get(&u)).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, _, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert_eq!(bodies[0], bodies[3]);
    let (_, _, fresh) = call(&app, get(&uris[1])).await;
    assert_eq!(fresh, bodies[1]);
    drop(Arc::clone(&state));
}

#[tokio::test]
async fn data_dir_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let first = app(config.clone());
    let id = upload_and_wait(&first, bimodal_body()).await;
    let (_, _, a) = call(&first, get(&format!("/api/datasets/{id}/snapshot?tau=q:0.5"))).await;

    let second = app(config);
    for _ in 0..600 {
        let (status, _, b) = call(&second, get(&format!("/api/datasets/{id}/snapshot?tau=q:0.5"))).await;
        if status == StatusCode::OK {
            assert_eq!(a, b);
            return;
        }
        assert_eq!(status, StatusCode::CONFLICT);
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("restarted service never became ready");
}
