//! HTTP API over interactive sessions.
//!
//! | Route | Body | Success |
//! |---|---|---|
//! | `POST /sessions` | [`CreateRequest`] | 201 [`CreateResponse`] |
//! | `POST /sessions/{id}/clicks` | [`ClickRequest`] | 200 [`ClickResponse`] |
//! | `POST /sessions/{id}/undo` | none | 200 [`SessionSummary`] |
//! | `GET /sessions/{id}` | none | 200 [`SessionSummary`] |
//!
//! Rasters travel as base64 inside JSON. Errors are `{"error": "..."}` with
//! 400 (undecodable input), 404 (unknown or expired session), 409 (slot
//! budget exhausted, nothing to undo) or 422 (out of bounds, size mismatch).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use uuid::Uuid;

use crate::error::Error;
use crate::mask::BinaryMask;
use crate::model::{Model, Session};
use crate::order::{DepthMap, DepthProvenance};
use crate::prompts::{Click, Polarity};
use crate::scenegen::{png_to_image, png_to_mask};

#[derive(Clone, Copy, Debug)]
pub struct ServiceConfig {
    /// Sessions untouched for this long are dropped.
    pub idle_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { idle_timeout: Duration::from_secs(30 * 60) }
    }
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CreateRequest {
    /// Base64 PNG, RGB or gray.
    pub image_png: String,
    /// Base64 little- or big-endian `Pf` file at image size.
    #[serde(default)]
    pub depth_pfm: Option<String>,
    /// Base64 ground-truth mask PNG (0/255), enables IoU reporting.
    #[serde(default)]
    pub gt_png: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CreateResponse {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rounds: usize,
    pub has_depth: bool,
    pub has_gt: bool,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct ClickRequest {
    pub x: usize,
    pub y: usize,
    pub polarity: Polarity,
}

/// Binary raster as alternating run lengths starting with background.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize, Serialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl RleMask {
    pub fn from_mask(m: &BinaryMask) -> Self {
        Self { width: m.width, height: m.height, runs: m.to_rle() }
    }

    pub fn decode(&self) -> crate::Result<BinaryMask> {
        BinaryMask::from_rle(self.width, self.height, &self.runs)
    }
}

#[derive(Debug, Deserialize, Serialize)]
pub struct ClickResponse {
    pub round: usize,
    pub mask: RleMask,
    /// Base64 8-bit grayscale PNG of the new click's order map.
    pub order_map_png: String,
    pub iou: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rounds: usize,
    pub clicks: Vec<Click>,
    pub ious: Option<Vec<f64>>,
    pub encode_ms: f64,
    pub click_ms: Vec<f64>,
    pub encoder_calls: u64,
}

struct Entry {
    session: Session,
    last_access: Instant,
}

/// Shared server state: read-only weights plus the session table.
#[derive(Clone)]
pub struct AppState {
    model: Arc<Model<f32>>,
    sessions: Arc<std::sync::Mutex<HashMap<Uuid, Arc<Mutex<Entry>>>>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(model: Arc<Model<f32>>, config: ServiceConfig) -> Self {
        Self { model, sessions: Default::default(), config }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    /// Drops sessions idle for longer than the timeout.
    pub async fn sweep(&self) {
        let entries: Vec<(Uuid, Arc<Mutex<Entry>>)> =
            self.sessions.lock().expect("session table").iter().map(|(k, v)| (*k, v.clone())).collect();
        for (id, entry) in entries {
            if entry.lock().await.last_access.elapsed() > self.config.idle_timeout {
                self.sessions.lock().expect("session table").remove(&id);
            }
        }
    }

    async fn entry(&self, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Entry>, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        let entry = self.sessions.lock().expect("session table").get(&uuid).cloned().ok_or_else(|| ApiError::not_found(id))?;
        let mut guard = entry.lock_owned().await;
        if guard.last_access.elapsed() > self.config.idle_timeout {
            self.sessions.lock().expect("session table").remove(&uuid);
            return Err(ApiError::not_found(id));
        }
        guard.last_access = Instant::now();
        Ok(guard)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    fn bad_input(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::OutOfBounds { .. } | Error::Dimension(_) | Error::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Capacity { .. } | Error::NothingToUndo => StatusCode::CONFLICT,
            Error::Image(_) | Error::Format(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn summary(id: &str, s: &Session) -> SessionSummary {
    let size = s.features().image_size;
    SessionSummary {
        id: id.to_string(),
        width: size.width,
        height: size.height,
        rounds: s.round(),
        clicks: s.clicks().chronological(),
        ious: s.has_gt().then(|| s.ious().to_vec()),
        encode_ms: ms(s.encode_time()),
        click_ms: s.click_times().iter().copied().map(ms).collect(),
        encoder_calls: s.encoder_calls(),
    }
}

fn decode_b64(field: &str, s: &str) -> Result<Vec<u8>, ApiError> {
    B64.decode(s).map_err(|e| ApiError::bad_input(format!("{field}: {e}")))
}

async fn create(State(app): State<AppState>, Json(req): Json<CreateRequest>) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let image = png_to_image(&decode_b64("image_png", &req.image_png)?).map_err(ApiError::bad_input)?;
    let depth = match &req.depth_pfm {
        None => None,
        Some(b) => {
            let (w, h, d) = crate::io::read_pfm(&decode_b64("depth_pfm", b)?).map_err(ApiError::bad_input)?;
            let t = crate::numerics::Tensor::new([h, w], d)?;
            Some(DepthMap::new(t, DepthProvenance::File)?)
        }
    };
    let gt = match &req.gt_png {
        None => None,
        Some(b) => Some(png_to_mask(&decode_b64("gt_png", b)?).map_err(ApiError::bad_input)?),
    };
    let (has_depth, has_gt) = (depth.is_some(), gt.is_some());
    if let Some(g) = &gt {
        let (h, w) = (image.shape()[0], image.shape()[1]);
        if (g.width, g.height) != (w, h) {
            return Err(Error::Dimension(format!("gt mask {}×{} does not match image {w}×{h}", g.width, g.height)).into());
        }
    }
    let model = app.model.clone();
    let session = tokio::task::spawn_blocking(move || Session::new(&model, &image, depth, gt))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let size = session.features().image_size;
    let id = Uuid::new_v4();
    let entry = Entry { session, last_access: Instant::now() };
    app.sessions.lock().expect("session table").insert(id, Arc::new(Mutex::new(entry)));
    log::info!("session {id} created ({}×{})", size.width, size.height);
    Ok((
        StatusCode::CREATED,
        Json(CreateResponse { id: id.to_string(), width: size.width, height: size.height, rounds: 0, has_depth, has_gt }),
    ))
}

async fn click(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ClickRequest>,
) -> Result<Json<ClickResponse>, ApiError> {
    let mut guard = app.entry(&id).await?;
    let model = app.model.clone();
    let result = tokio::task::spawn_blocking(move || {
        let r = guard.session.click(&model, req.x, req.y, req.polarity);
        (guard, r)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .1?;
    let png = crate::viz::order_map_png(&result.order_map)?;
    Ok(Json(ClickResponse {
        round: result.round,
        mask: RleMask::from_mask(&result.mask),
        order_map_png: B64.encode(png),
        iou: result.iou,
        elapsed_ms: ms(result.elapsed),
    }))
}

async fn undo(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let mut guard = app.entry(&id).await?;
    guard.session.undo()?;
    Ok(Json(summary(&id, &guard.session)))
}

async fn show(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let guard = app.entry(&id).await?;
    Ok(Json(summary(&id, &guard.session)))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/clicks", post(click))
        .route("/sessions/{id}/undo", post(undo))
        .layer(axum::extract::DefaultBodyLimit::max(32 << 20))
        .with_state(state)
}

/// Serves until the process is stopped; idle sessions are swept every
/// quarter of the timeout.
pub async fn serve(addr: SocketAddr, model: Arc<Model<f32>>, config: ServiceConfig) -> crate::Result<()> {
    let state = AppState::new(model, config);
    let sweeper = state.clone();
    let period = (config.idle_timeout / 4).max(Duration::from_millis(100));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.sweep().await;
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
