//! HTTP API over analysis snapshots.
//!
//! Datasets are content-addressed: the id is the hash of the canonical
//! dataset JSON, so re-uploads and restarts map to the same id. Inclusion
//! matrices build in the background; snapshot requests return 409 with a
//! progress fraction until the build finishes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::dataset::{parse_dataset, to_json_bytes, Dataset, DatasetFormat};
use crate::pipeline::{AnalysisConfig, AnalysisSnapshot, Engine, Prepared, TauSpec};

pub const DEFAULT_MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Uploaded datasets and inclusion caches persist here.
    pub data_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
    pub budget: Option<usize>,
    /// Seed for band sampling and the default analysis seed.
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            budget: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum BuildState {
    Building,
    Ready(Arc<Prepared>),
    Failed(String),
}

#[derive(Debug)]
struct DatasetEntry {
    dataset: Arc<Dataset>,
    done: AtomicUsize,
    total: AtomicUsize,
    state: RwLock<BuildState>,
}

impl DatasetEntry {
    fn progress(&self) -> f64 {
        let total = self.total.load(Ordering::Relaxed);
        if total == 0 {
            0.0
        } else {
            (self.done.load(Ordering::Relaxed) as f64 / total as f64).min(1.0)
        }
    }

    fn status_json(&self, id: &str) -> serde_json::Value {
        let (status, error) = match &*self.state.read().expect("lock") {
            BuildState::Building => ("building", None),
            BuildState::Ready(_) => ("ready", None),
            BuildState::Failed(e) => ("failed", Some(e.clone())),
        };
        json!({
            "id": id,
            "name": self.dataset.id(),
            "n": self.dataset.len(),
            "attributes": self.dataset.schema().len(),
            "status": status,
            "progress": if status == "ready" { 1.0 } else { self.progress() },
            "error": error,
        })
    }
}

pub struct AppState {
    engine: Engine,
    config: ServiceConfig,
    datasets: RwLock<BTreeMap<String, Arc<DatasetEntry>>>,
}

impl AppState {
    /// Loads any datasets persisted under `config.data_dir` and starts their
    /// builds. Must run inside a tokio runtime.
    pub fn new(config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let engine = match &config.data_dir {
            Some(dir) => {
                fs::create_dir_all(dir.join("datasets"))?;
                Engine::with_cache_dir(dir.join("cache"))
            }
            None => Engine::new(),
        };
        let state = Arc::new(Self {
            engine,
            config,
            datasets: RwLock::new(BTreeMap::new()),
        });
        if let Some(dir) = state.config.data_dir.clone() {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("datasets"))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                match fs::read(&path).map_err(|e| e.to_string()).and_then(|b| {
                    parse_dataset(&b, DatasetFormat::JsonV1).map_err(|e| e.to_string())
                }) {
                    Ok(d) => {
                        state.register(d);
                    }
                    Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping stored dataset"),
                }
            }
        }
        Ok(state)
    }

    /// Inserts the dataset unless already known and starts its build.
    /// Returns the id and whether it was new.
    fn register(self: &Arc<Self>, dataset: Dataset) -> (String, bool) {
        let id = dataset.content_hash();
        let mut map = self.datasets.write().expect("lock");
        if map.contains_key(&id) {
            return (id, false);
        }
        let entry = Arc::new(DatasetEntry {
            dataset: Arc::new(dataset),
            done: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
            state: RwLock::new(BuildState::Building),
        });
        map.insert(id.clone(), entry.clone());
        drop(map);
        let state = self.clone();
        tokio::task::spawn_blocking(move || state.build(&entry));
        (id, true)
    }

    fn build(&self, entry: &DatasetEntry) {
        let plan = crate::bands::plan_bands(&entry.dataset, self.config.budget, self.config.seed);
        if let Ok(p) = &plan {
            entry.total.store(p.band_count(), Ordering::Relaxed);
        }
        let result = self
            .engine
            .prepare(entry.dataset.clone(), self.config.budget, self.config.seed, Some(&entry.done));
        let next = match result {
            Ok(p) => BuildState::Ready(p),
            Err(e) => BuildState::Failed(e.to_string()),
        };
        *entry.state.write().expect("lock") = next;
    }

    fn persist(&self, id: &str, dataset: &Dataset) {
        let Some(dir) = &self.config.data_dir else { return };
        let path = dir.join("datasets").join(format!("{id}.json"));
        if let Err(e) = fs::write(&path, to_json_bytes(dataset)) {
            tracing::warn!(path = %path.display(), error = %e, "could not persist dataset");
        }
    }

    fn entry(&self, id: &str) -> Option<Arc<DatasetEntry>> {
        self.datasets.read().expect("lock").get(id).cloned()
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.config.data_dir.as_deref()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([header::ETAG]);
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/api/datasets", post(upload).get(list))
        .route("/api/datasets/{id}", get(status))
        .route("/api/datasets/{id}/snapshot", get(snapshot))
        .route("/api/datasets/{id}/histogram", get(histogram))
        .route("/api/datasets/{id}/similarity", get(similarity))
        .route("/api/datasets/{id}/summaries", get(summaries))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug)]
struct ApiError(StatusCode, serde_json::Value);

impl ApiError {
    fn new(code: StatusCode, message: impl Into<String>) -> Self {
        ApiError(code, json!({ "error": message.into() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

async fn upload(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let dataset = parse_dataset(&body, DatasetFormat::JsonV1)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let persisted = dataset.clone();
    let (id, created) = state.register(dataset);
    if created {
        state.persist(&id, &persisted);
    }
    let code = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((code, Json(json!({ "id": id }))).into_response())
}

async fn list(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let map = state.datasets.read().expect("lock");
    Json(json!({
        "datasets": map.iter().map(|(id, e)| e.status_json(id)).collect::<Vec<_>>(),
    }))
}

async fn status(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = state.entry(&id).ok_or_else(|| not_found(&id))?;
    Ok(Json(entry.status_json(&id)).into_response())
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown dataset {id}"))
}

fn ready(state: &AppState, id: &str) -> Result<Arc<Prepared>, ApiError> {
    let entry = state.entry(id).ok_or_else(|| not_found(id))?;
    let current = entry.state.read().expect("lock").clone();
    match current {
        BuildState::Ready(p) => Ok(p),
        BuildState::Building => Err(ApiError(
            StatusCode::CONFLICT,
            json!({ "error": "inclusion build in progress", "status": "building", "progress": entry.progress() }),
        )),
        BuildState::Failed(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)),
    }
}

#[derive(Debug, Default, Deserialize)]
struct SnapshotQuery {
    tau: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
}

async fn snapshot_of(
    state: &Arc<AppState>,
    id: &str,
    query: &SnapshotQuery,
) -> Result<Arc<AnalysisSnapshot>, ApiError> {
    let prepared = ready(state, id)?;
    let tau: TauSpec = match &query.tau {
        Some(t) => t.parse().map_err(|e: crate::pipeline::TauParseError| {
            ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
        })?,
        None => TauSpec::Infinite,
    };
    if query.k.is_some_and(|k| k == 0 || k > prepared.dataset.len()) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("k must lie in [1, {}]", prepared.dataset.len()),
        ));
    }
    let config = AnalysisConfig {
        budget: state.config.budget,
        seed: query.seed.unwrap_or(state.config.seed),
        tau,
        k: query.k,
        ..AnalysisConfig::default()
    };
    let state = state.clone();
    tokio::task::spawn_blocking(move || state.engine.snapshot_for(&prepared, &config, None))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

/// 200 with an `ETag` of the body hash, or 304 when `If-None-Match` matches.
fn with_etag(headers: &HeaderMap, body: Vec<u8>) -> Response {
    use sha2::{Digest, Sha256};
    let tag = format!("\"{}\"", hex::encode(Sha256::digest(&body)));
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"));
    let etag = HeaderValue::from_str(&tag).expect("hex etag");
    if matches {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response();
    }
    (
        StatusCode::OK,
        [(header::ETAG, etag), (header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

async fn snapshot(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<SnapshotQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let snap = snapshot_of(&state, &id, &query).await?;
    Ok(with_etag(&headers, snap.to_json_bytes()))
}

async fn histogram(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let prepared = ready(&state, &id)?;
    let body = serde_json::to_vec(&prepared.histogram).expect("serializes");
    Ok(with_etag(&headers, body))
}

async fn similarity(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<SnapshotQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let snap = snapshot_of(&state, &id, &query).await?;
    let mut body = snap.similarity.to_json(&snap.spectral.order);
    body["labels"] = json!(snap.spectral.labels);
    let body = serde_json::to_vec(&body).expect("serializes");
    Ok(with_etag(&headers, body))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummariesBody<'a> {
    #[serde(serialize_with = "tau_ser")]
    tau: f64,
    bins: &'a [u8],
    labels: &'a [usize],
    summaries: &'a [crate::stats::AttributeSummary],
}

fn tau_ser<S: serde::Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
    crate::pipeline::tau_json(*tau).serialize(s)
}

async fn summaries(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<SnapshotQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let snap = snapshot_of(&state, &id, &query).await?;
    let body = SummariesBody {
        tau: snap.tau,
        bins: &snap.coloring.bin,
        labels: &snap.spectral.labels,
        summaries: &snap.summaries,
    };
    Ok(with_etag(&headers, serde_json::to_vec(&body).expect("serializes")))
}
