//! In-memory session service over HTTP + JSON.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path as FsPath;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use slidebo::{AcquisitionConfig, Generator, PriorSpec, ProceduralGenerator, Session, SessionConfig};
use tokio::sync::RwLock;

use crate::wire::{png_base64, WireEdit};

/// Service-wide settings. Requests never modify these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub port: u16,
    /// Default latent dimension for new sessions.
    pub d: usize,
    /// Default slider count.
    pub c: usize,
    pub width: usize,
    pub height: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub idle_timeout_secs: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let acq = AcquisitionConfig::default();
        Self {
            port: 8080,
            d: 16,
            c: 4,
            width: 64,
            height: 64,
            sigma1: acq.sigma1,
            sigma2: acq.sigma2,
            // Lighter than the library defaults: every content-term gradient
            // costs 2d + 1 renders and a step should stay interactive.
            restarts: 4,
            max_iters: 40,
            idle_timeout_secs: 30 * 60,
        }
    }
}

impl ServerConfig {
    /// Reads a TOML file; missing keys keep their defaults.
    pub fn from_file(path: &FsPath) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            restarts: self.restarts,
            max_iters: self.max_iters,
            ..AcquisitionConfig::default()
        }
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
        Self::new(StatusCode::NOT_FOUND, format!("no session '{id}'"))
    }
}

impl From<slidebo::Error> for ApiError {
    fn from(e: slidebo::Error) -> Self {
        use slidebo::Error::*;
        let status = match e {
            DegenerateSliders | DimensionMismatch { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            InvalidArgument(_) | ShapeMismatch { .. } => StatusCode::BAD_REQUEST,
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

type ApiResult<T> = Result<T, ApiError>;

struct Entry {
    session: Arc<RwLock<Session>>,
    last_used: Mutex<Instant>,
}

impl Entry {
    fn touch(&self) {
        *self.last_used.lock().unwrap() = Instant::now();
    }
}

pub struct AppState {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, Arc<Entry>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { config, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn get(&self, id: &str) -> ApiResult<Arc<Entry>> {
        let entry = self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))?;
        entry.touch();
        Ok(entry)
    }

    /// Drops sessions idle for longer than the configured timeout as of `now`.
    pub fn expire_idle(&self, now: Instant) -> usize {
        let ttl = Duration::from_secs(self.config.idle_timeout_secs);
        let mut map = self.sessions.lock().unwrap();
        let before = map.len();
        map.retain(|_, e| now.saturating_duration_since(*e.last_used.lock().unwrap()) < ttl);
        before - map.len()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    d: Option<usize>,
    c: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlendRequest {
    sliders: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    sliders: Vec<f64>,
    #[serde(default)]
    edits: Vec<WireEdit>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: String,
    pub d: usize,
    pub c: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub iteration: usize,
    /// Base64 PNG per candidate; slider `i` blends towards `candidates[i]`.
    pub candidates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlendResponse {
    pub image_png_base64: String,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))
}

fn describe(id: &str, session: &Session) -> ApiResult<SessionDescriptor> {
    let cfg = session.config();
    let (width, height) = cfg.generator.as_ref().map(|g| g.resolution()).unwrap_or((0, 0));
    let candidates = session
        .candidates()
        .iter()
        .map(|z| session.render(z).map(|img| png_base64(&img)))
        .collect::<slidebo::Result<Vec<_>>>()?;
    Ok(SessionDescriptor {
        id: id.to_string(),
        d: cfg.dimension,
        c: cfg.candidate_count,
        seed: cfg.seed,
        width,
        height,
        iteration: session.iteration(),
        candidates,
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionDescriptor>)> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) { CreateRequest::default() } else { parse_json(&body)? };
    let d = req.d.unwrap_or(app.config.d);
    let c = req.c.unwrap_or(app.config.c);
    let seed = req.seed.unwrap_or_else(rand::random);
    let generator = ProceduralGenerator::new(d, app.config.width, app.config.height)?;
    let mut cfg = SessionConfig::new(d, PriorSpec::StandardNormal);
    cfg.candidate_count = c;
    cfg.seed = seed;
    cfg.acquisition = app.config.acquisition();
    cfg.generator = Some(Arc::new(generator) as Arc<dyn Generator>);

    let id = uuid::Uuid::new_v4().simple().to_string();
    let (session, desc) = blocking({
        let id = id.clone();
        move || {
            let session = Session::create(cfg)?;
            let desc = describe(&id, &session)?;
            Ok((session, desc))
        }
    })
    .await?;
    let entry = Arc::new(Entry { session: Arc::new(RwLock::new(session)), last_used: Mutex::new(Instant::now()) });
    app.sessions.lock().unwrap().insert(id, entry);
    Ok((StatusCode::CREATED, Json(desc)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionDescriptor>> {
    let entry = app.get(&id)?;
    let guard = entry.session.clone().read_owned().await;
    blocking(move || describe(&id, &guard)).await.map(Json)
}

async fn blend(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<BlendResponse>> {
    let entry = app.get(&id)?;
    let req: BlendRequest = parse_json(&body)?;
    let guard = entry.session.clone().read_owned().await;
    blocking(move || {
        let z = guard.blend(&req.sliders)?;
        Ok(BlendResponse { image_png_base64: png_base64(&guard.render(&z)?) })
    })
    .await
    .map(Json)
}

async fn step(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionDescriptor>> {
    let entry = app.get(&id)?;
    let req: StepRequest = parse_json(&body)?;
    let (w, h) = (app.config.width, app.config.height);
    let edits = req
        .edits
        .iter()
        .map(|e| e.decode(w, h))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut guard = entry.session.clone().write_owned().await;
    let desc = blocking(move || {
        guard.step(&req.sliders, &edits)?;
        describe(&id, &guard)
    })
    .await?;
    entry.touch();
    Ok(Json(desc))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match app.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/blend", post(blend))
        .route("/sessions/{id}/step", post(step))
        .with_state(state)
}

/// Binds `config.port` on all interfaces and serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    eprintln!("slidebo listening on {}", listener.local_addr()?);

    let state = Arc::new(AppState::new(config));
    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                state.expire_idle(Instant::now());
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    result.context("server error")
}
