//! HTTP API over a [`Store`].
//!
//! | method | path | response |
//! |---|---|---|
//! | GET  | `/api/studies` | study summaries |
//! | GET  | `/api/studies/{id}` | one summary |
//! | GET  | `/api/studies/{id}/slice?plane=&index=&window=l,w` | grayscale PNG |
//! | GET  | `/api/studies/{id}/mask?plane=&index=&format=png\|raw` | label PNG or raw `u8` |
//! | POST | `/api/studies/{id}/edits` | `{"new_version"}`, 409 on a stale base, 422 on a bad batch |
//! | POST | `/api/studies/{id}/resegment` | `{"new_version"}` |
//! | GET  | `/api/studies/{id}/report` | tissue report JSON |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use abdkit::volume::{Plane, WindowSpec};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::edit::{EditBatch, FieldError};
use crate::render;
use crate::store::{Store, StoreError};

pub type AppState = Arc<Store>;

#[derive(Debug)]
pub struct ApiError(pub StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl From<abdkit::Error> for ApiError {
    fn from(e: abdkit::Error) -> Self {
        ApiError(StoreError::Core(e))
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ApiError {
    ApiError(StoreError::Invalid(vec![FieldError::new(field, message)]))
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let msg = self.0.to_string();
        let (status, body) = match self.0 {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": msg })),
            StoreError::Exists(_) => (StatusCode::CONFLICT, json!({ "error": msg })),
            StoreError::Conflict { current, .. } => (
                StatusCode::CONFLICT,
                json!({ "error": msg, "current_version": current }),
            ),
            StoreError::Invalid(fields) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "invalid request", "fields": fields }),
            ),
            StoreError::Core(e) => {
                let status = match e {
                    abdkit::Error::Range(_) | abdkit::Error::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, json!({ "error": msg }))
            }
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{id}", get(get_study))
        .route("/api/studies/{id}/slice", get(get_slice))
        .route("/api/studies/{id}/mask", get(get_mask))
        .route("/api/studies/{id}/edits", post(post_edits))
        .route("/api/studies/{id}/resegment", post(post_resegment))
        .route("/api/studies/{id}/report", get(get_report))
        .with_state(store)
}

/// Serves until the listener fails.
pub async fn serve(store: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError(StoreError::Core(abdkit::Error::Contract(format!("worker failed: {e}"))))))
}

async fn list_studies(State(store): State<AppState>) -> Json<serde_json::Value> {
    Json(json!(store.list()))
}

async fn get_study(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(json!(store.get(&id)?.snapshot().summary())))
}

fn plane_and_index(q: &HashMap<String, String>) -> ApiResult<(Plane, usize)> {
    let plane = match q.get("plane") {
        None => Plane::Axial,
        Some(p) => p.parse().map_err(|_| invalid("plane", format!("'{p}' is not axial, coronal or sagittal")))?,
    };
    let index = q
        .get("index")
        .ok_or_else(|| invalid("index", "required"))?
        .parse()
        .map_err(|_| invalid("index", "must be a non-negative integer"))?;
    Ok((plane, index))
}

fn parse_window(s: &str) -> ApiResult<WindowSpec> {
    let bad = || invalid("window", format!("'{s}' is not 'level,width' with width > 0"));
    let (l, w) = s.split_once(',').ok_or_else(bad)?;
    let (l, w) = (l.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?);
    WindowSpec::new(l, w).map_err(|_| bad())
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_slice(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = store.get(&id)?.snapshot();
    let (plane, index) = plane_and_index(&q)?;
    let window = q.get("window").map(|w| parse_window(w)).transpose()?.unwrap_or_default();
    Ok(png(render::slice_png(&snap.volume, plane, index, window)?))
}

async fn get_mask(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = store.get(&id)?.snapshot();
    let (plane, index) = plane_and_index(&q)?;
    let version = HeaderValue::from(snap.meta.mask_version);
    match q.get("format").map(String::as_str).unwrap_or("png") {
        "png" => {
            let mut r = png(render::mask_png(&snap.masks, plane, index)?);
            r.headers_mut().insert("x-mask-version", version);
            Ok(r)
        }
        "raw" => {
            let (rows, cols, labels) = render::mask_raw(&snap.masks, plane, index)?;
            let mut r = ([(header::CONTENT_TYPE, "application/octet-stream")], labels).into_response();
            let h = r.headers_mut();
            h.insert("x-mask-rows", HeaderValue::from(rows));
            h.insert("x-mask-cols", HeaderValue::from(cols));
            h.insert("x-mask-version", version);
            Ok(r)
        }
        other => Err(invalid("format", format!("'{other}' is not png or raw"))),
    }
}

async fn post_edits(State(store): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let study = store.get(&id)?;
    let batch: EditBatch = serde_json::from_slice(&body).map_err(|e| invalid("body", e.to_string()))?;
    let v = blocking(move || Ok(study.apply_edit(&batch)?)).await?;
    Ok(Json(json!({ "new_version": v })).into_response())
}

async fn post_resegment(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let study = store.get(&id)?;
    let v = blocking(move || Ok(study.resegment()?)).await?;
    Ok(Json(json!({ "new_version": v })).into_response())
}

async fn get_report(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = store.get(&id)?.snapshot();
    let report = blocking(move || Ok(snap.report()?)).await?;
    Ok(Json(report).into_response())
}
