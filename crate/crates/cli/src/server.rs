//! HTTP/JSON interpretation service.
//!
//! Routes (all JSON):
//!
//! - `GET  /api/metadata`
//! - `GET  /api/instances?offset=&limit=`
//! - `POST /api/predict            {text}`
//! - `POST /api/attribute/tokens   {text}`
//! - `POST /api/attribute/features {text}`
//!
//! Errors are `{error, message}` with status 400, 413 for texts over the
//! occlusion limit, 404 for unknown API paths and 500 otherwise.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use ats_core::interpret::{attribute_features, attribute_tokens};
use ats_core::{Dataset, Error, Prediction, Profiler};
use axum::body::Bytes;
use axum::extract::{RawQuery, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub text: String,
    pub gold_label: Option<i64>,
    pub pred_label: i64,
    pub pred_score: f64,
}

#[derive(Clone)]
pub struct AppState {
    profiler: Arc<Profiler>,
    rows: Arc<Vec<InstanceRow>>,
}

impl AppState {
    /// Predictions for the browsed dataset are computed once here.
    pub fn new(profiler: Arc<Profiler>, dataset: Option<Arc<Dataset>>) -> Result<Self, Error> {
        let rows = match dataset {
            None => Vec::new(),
            Some(ds) => ds
                .iter()
                .map(|inst| {
                    let pred = profiler.predict(&inst.text)?;
                    Ok(InstanceRow {
                        id: inst.id.clone(),
                        text: inst.text.clone(),
                        gold_label: inst.label,
                        pred_label: pred.label,
                        pred_score: pred.score,
                    })
                })
                .collect::<Result<_, Error>>()?,
        };
        Ok(AppState {
            profiler,
            rows: Arc::new(rows),
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "BadRequest",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::TooManyTokens { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            Error::NoTokens | Error::NonFiniteScore(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Deserialize)]
struct TextRequest {
    text: String,
}

fn parse_text(body: &Bytes) -> Result<String, ApiError> {
    serde_json::from_slice::<TextRequest>(body)
        .map(|r| r.text)
        .map_err(|e| ApiError::bad_request(format!("expected a JSON body {{\"text\": string}}: {e}")))
}

/// Runs CPU-bound model work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "Internal",
            message: e.to_string(),
        }),
    }
}

async fn metadata(State(s): State<AppState>) -> Json<serde_json::Value> {
    let p = &s.profiler;
    let spec = p.label_spec();
    Json(json!({
        "task": p.task(),
        "label_spec": {"lo": spec.lo(), "hi": spec.hi()},
        "feature_names": p.feature_names(),
        "model": p.model().type_name(),
        "dataset_size": s.rows.len(),
    }))
}

fn query_usize(query: Option<&str>, key: &str, default: usize) -> Result<usize, ApiError> {
    let Some(q) = query else { return Ok(default) };
    for pair in q.split('&') {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if k == key {
            return v
                .parse()
                .map_err(|_| ApiError::bad_request(format!("{key} must be a non-negative integer, got {v:?}")));
        }
    }
    Ok(default)
}

async fn instances(State(s): State<AppState>, RawQuery(q): RawQuery) -> ApiResult<serde_json::Value> {
    let offset = query_usize(q.as_deref(), "offset", 0)?;
    let limit = query_usize(q.as_deref(), "limit", DEFAULT_PAGE)?.min(MAX_PAGE);
    let items: Vec<&InstanceRow> = s.rows.iter().skip(offset).take(limit).collect();
    Ok(Json(json!({"total": s.rows.len(), "offset": offset, "items": items})))
}

async fn predict(State(s): State<AppState>, body: Bytes) -> ApiResult<Prediction> {
    let text = parse_text(&body)?;
    let p = s.profiler.clone();
    blocking(move || p.predict(&text)).await.map(Json)
}

async fn tokens(State(s): State<AppState>, body: Bytes) -> ApiResult<ats_core::interpret::TokenAttribution> {
    let text = parse_text(&body)?;
    let p = s.profiler.clone();
    blocking(move || attribute_tokens(&p, &text)).await.map(Json)
}

async fn features(State(s): State<AppState>, body: Bytes) -> ApiResult<ats_core::interpret::FeatureAttribution> {
    let text = parse_text(&body)?;
    let p = s.profiler.clone();
    blocking(move || attribute_features(&p, &text)).await.map(Json)
}

async fn api_not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "NotFound",
        message: "no such endpoint".into(),
    }
}

async fn index() -> Html<&'static str> {
    Html(
        "<!doctype html><title>ats</title><p>No UI bundled. API endpoints: \
         <code>/api/metadata</code>, <code>/api/instances</code>, <code>/api/predict</code>, \
         <code>/api/attribute/tokens</code>, <code>/api/attribute/features</code>.</p>",
    )
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/metadata", get(metadata))
        .route("/instances", get(instances))
        .route("/predict", post(predict))
        .route("/attribute/tokens", post(tokens))
        .route("/attribute/features", post(features))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(index)),
    };
    app.layer(CorsLayer::permissive())
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    ui_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
