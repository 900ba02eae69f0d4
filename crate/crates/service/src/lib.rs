//! JSON-over-HTTP annotation service.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | `GET` | `/providers` | configured model names |
//! | `POST` | `/sessions` | create a session from an image and a question |
//! | `GET` | `/sessions/{id}` | session resource |
//! | `GET` | `/sessions/{id}/turns` | every turn record |
//! | `POST` | `/sessions/{id}/turns` | run one turn (optional user text / new image) |
//! | `GET` | `/sessions/{id}/layers` | layer list with visibility |
//! | `GET` | `/sessions/{id}/image` | the untouched base image (PNG) |
//! | `GET` | `/sessions/{id}/overlay.svg` | current overlay |
//! | `PATCH` | `/sessions/{id}/strokes/{sid}` | show or hide one stroke |
//! | `GET` | `/sessions/{id}/export?format=svg\|png\|anno.json` | artifacts |
//!
//! Each session lives in `<data>/sessions/<id>/`: `base.png`, injected
//! images under `images/`, and `events.jsonl`, an append-only log that
//! rebuilds the session on startup.

use std::collections::{BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use strokelab_core::prompting::{PromptConfig, TaskPrompt};
use strokelab_core::render::{composite, OverlayDocument, RasterImage};
use strokelab_core::stroke::{serialize_annotation, Dialect};
use strokelab_engine::session::{Session, SessionError, SessionEvent, SessionOptions, SessionStatus, TurnFlag, TurnRecord, DEFAULT_MAX_TURNS};
use strokelab_engine::ProviderRegistry;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

/// Largest accepted image, before base64 encoding.
pub const MAX_IMAGE_BYTES: usize = 20 * 1024 * 1024;
/// Request bodies carry base64 (4/3 growth) plus a little JSON.
const MAX_BODY_BYTES: usize = MAX_IMAGE_BYTES / 3 * 4 + 64 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Built studio assets, served at `/` when set.
    pub static_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

/// Service-level log line; session turns are embedded verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServiceEvent {
    Meta { provider: String, created_at: u64, question: String },
    Session { event: SessionEvent },
    Visibility { stroke_id: String, visible: bool },
}

struct Entry {
    session: Session,
    provider: String,
    question: String,
    created_at: u64,
    overlay_version: u64,
    hidden: BTreeSet<String>,
    dir: PathBuf,
}

impl Entry {
    fn log(&self, ev: &ServiceEvent) -> Result<(), ApiError> {
        let p = self.dir.join("events.jsonl");
        let mut f = OpenOptions::new().create(true).append(true).open(&p).map_err(ApiError::internal)?;
        writeln!(f, "{}", serde_json::to_string(ev).expect("events serialize")).map_err(ApiError::internal)
    }

    fn overlay(&self) -> OverlayDocument {
        let mut doc = self.session.overlay();
        for id in &self.hidden {
            doc.set_visible(id, false);
        }
        doc
    }

    fn resource(&self) -> SessionResource {
        let (width, height) = self.session.base_image().dims();
        SessionResource {
            id: self.session.id.clone(),
            status: self.session.status,
            turn_count: self.session.turns.len(),
            overlay_version: self.overlay_version,
            created_at: self.created_at,
            provider: self.provider.clone(),
            question: self.question.clone(),
            width,
            height,
            final_answer: self.session.final_answer.clone(),
        }
    }

    fn layers(&self) -> Vec<LayerView> {
        self.overlay()
            .layers
            .into_iter()
            .map(|l| LayerView { stroke_id: l.stroke_id, visible: l.visible, color: l.color })
            .collect()
    }

    /// Applies a turn to the view state: a turn that adds strokes or swaps
    /// the image bumps the overlay version; a new image clears visibility.
    fn note_turn(&mut self, rec: &TurnRecord) {
        if rec.has_flag(&TurnFlag::ImageReplaced) {
            self.hidden.clear();
        }
        if rec.has_flag(&TurnFlag::ImageReplaced) || !rec.delta.strokes.is_empty() {
            self.overlay_version += 1;
        }
    }

    fn set_visible(&mut self, stroke_id: &str, visible: bool) -> bool {
        let changed = if visible { self.hidden.remove(stroke_id) } else { self.hidden.insert(stroke_id.to_owned()) };
        if changed {
            self.overlay_version += 1;
        }
        changed
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    registry: ProviderRegistry,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResource {
    pub id: String,
    pub status: SessionStatus,
    pub turn_count: usize,
    pub overlay_version: u64,
    pub created_at: u64,
    pub provider: String,
    pub question: String,
    pub width: u32,
    pub height: u32,
    pub final_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerView {
    pub stroke_id: String,
    pub visible: bool,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub record: TurnRecord,
    pub session: SessionResource,
    pub layers: Vec<LayerView>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSession {
    pub question: String,
    pub provider: String,
    /// Raw base64 or a `data:` URL.
    #[serde(default)]
    pub image_base64: Option<String>,
    #[serde(default)]
    pub image_url: Option<String>,
    #[serde(default)]
    pub prompt: Option<PromptConfig>,
    /// Defaults to a free question built from `question`.
    #[serde(default)]
    pub task: Option<TaskPrompt>,
    #[serde(default)]
    pub max_turns: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct StepRequest {
    #[serde(default)]
    pub user_text: Option<String>,
    #[serde(default)]
    pub image_base64: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct VisibilityRequest {
    pub visible: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExportQuery {
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "svg".into()
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn parse_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("invalid request body: {e}")))
}

/// Decodes an uploaded image (base64 or `data:` URL) and normalizes it to
/// RGBA; anything undecodable, empty or oversized is a 400.
pub fn decode_upload(b64: &str) -> Result<RasterImage, ApiError> {
    let payload = match b64.split_once(";base64,") {
        Some((head, rest)) if head.starts_with("data:") => rest,
        _ => b64,
    };
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(payload.trim().as_bytes())
        .map_err(|e| ApiError::bad(format!("image is not valid base64: {e}")))?;
    decode_bytes(&bytes)
}

fn decode_bytes(bytes: &[u8]) -> Result<RasterImage, ApiError> {
    if bytes.len() > MAX_IMAGE_BYTES {
        return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "image exceeds 20 MB"));
    }
    RasterImage::decode(bytes).map_err(|e| ApiError::bad(e.to_string()))
}

fn fetch_url(url: &str) -> Result<RasterImage, ApiError> {
    let resp = reqwest::blocking::get(url).map_err(|e| ApiError::bad(format!("image fetch failed: {e}")))?;
    if !resp.status().is_success() {
        return Err(ApiError::bad(format!("image fetch returned {}", resp.status())));
    }
    let bytes = resp.bytes().map_err(|e| ApiError::bad(format!("image fetch failed: {e}")))?;
    decode_bytes(&bytes)
}

fn session_error(e: SessionError) -> ApiError {
    match e {
        SessionError::NotSteppable(s) => ApiError::new(StatusCode::CONFLICT, format!("session is {s:?}")),
        SessionError::Gateway(g) => ApiError::new(StatusCode::BAD_GATEWAY, g.to_string()),
        SessionError::Prompt(_) | SessionError::Config(_) => ApiError::bad(e.to_string()),
        other => ApiError::internal(other),
    }
}

fn write_png(path: &Path, img: &RasterImage) -> Result<(), ApiError> {
    std::fs::write(path, img.to_png().map_err(ApiError::internal)?).map_err(ApiError::internal)
}

impl AppState {
    /// Opens the data directory and rebuilds every logged session.
    pub fn open(cfg: ServiceConfig, registry: ProviderRegistry) -> std::io::Result<Self> {
        let root = cfg.data_dir.join("sessions");
        std::fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        for dir in std::fs::read_dir(&root)? {
            let dir = dir?.path();
            match Self::restore(&dir) {
                Ok(e) => {
                    sessions.insert(e.session.id.clone(), Arc::new(Mutex::new(e)));
                }
                Err(e) => tracing::warn!("skipping {}: {}", dir.display(), e.message),
            }
        }
        Ok(Self { cfg, registry, sessions: RwLock::new(sessions) })
    }

    fn restore(dir: &Path) -> Result<Entry, ApiError> {
        let text = std::fs::read_to_string(dir.join("events.jsonl")).map_err(ApiError::internal)?;
        let events: Vec<ServiceEvent> =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>().map_err(ApiError::internal)?;
        let Some(ServiceEvent::Meta { provider, created_at, question }) = events.first().cloned() else {
            return Err(ApiError::internal("log does not start with meta"));
        };
        let base = RasterImage::decode(&std::fs::read(dir.join("base.png")).map_err(ApiError::internal)?).map_err(ApiError::internal)?;
        let session_events: Vec<SessionEvent> = events
            .iter()
            .filter_map(|e| match e {
                ServiceEvent::Session { event } => Some(event.clone()),
                _ => None,
            })
            .collect();
        let images = dir.join("images");
        let session = Session::replay(
            &session_events,
            base,
            |sha| std::fs::read(images.join(format!("{sha}.png"))).ok().and_then(|b| RasterImage::decode(&b).ok()),
            SessionOptions::default(),
        )
        .map_err(ApiError::internal)?;
        let mut entry =
            Entry { session, provider, question, created_at, overlay_version: 0, hidden: BTreeSet::new(), dir: dir.to_path_buf() };
        for e in &events[1..] {
            match e {
                ServiceEvent::Session { event: SessionEvent::Turn { record } } => entry.note_turn(record),
                ServiceEvent::Visibility { stroke_id, visible } => {
                    entry.set_visible(stroke_id, *visible);
                }
                _ => {}
            }
        }
        Ok(entry)
    }

    async fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

/// The full router, with CORS and optional static assets.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = match &state.cfg.cors_origin {
        Some(o) => CorsLayer::new().allow_origin(AllowOrigin::exact(HeaderValue::from_str(o).unwrap_or(HeaderValue::from_static("null")))),
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods([Method::GET, Method::POST, Method::PATCH, Method::OPTIONS])
    .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/providers", get(list_providers))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", get(list_turns).post(step_session))
        .route("/sessions/{id}/layers", get(get_layers))
        .route("/sessions/{id}/image", get(get_image))
        .route("/sessions/{id}/overlay.svg", get(get_overlay))
        .route("/sessions/{id}/strokes/{sid}", patch(patch_stroke))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES));
    let app = match &state.cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors).with_state(state)
}

async fn list_providers(State(st): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(st.registry.names())
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionResource>), ApiError> {
    let req: CreateSession = parse_json(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad("question is empty"));
    }
    let image = match (&req.image_base64, &req.image_url) {
        (Some(b), _) => decode_upload(b)?,
        (None, Some(u)) => {
            let u = u.clone();
            tokio::task::spawn_blocking(move || if u.starts_with("data:") { decode_upload(&u) } else { fetch_url(&u) })
                .await
                .map_err(ApiError::internal)??
        }
        (None, None) => return Err(ApiError::bad("image_base64 or image_url is required")),
    };
    let prompt = req.prompt.clone().unwrap_or_default();
    let task = req.task.clone().unwrap_or(TaskPrompt::FreeQuestion { text: req.question.clone() });
    let opts = SessionOptions { max_turns: req.max_turns.unwrap_or(DEFAULT_MAX_TURNS), ..Default::default() };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), image, prompt, task, opts).map_err(session_error)?;
    if !st.registry.contains(&req.provider) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown provider {:?}", req.provider)));
    }
    let dir = st.cfg.data_dir.join("sessions").join(&id);
    std::fs::create_dir_all(dir.join("images")).map_err(ApiError::internal)?;
    write_png(&dir.join("base.png"), session.base_image())?;
    let entry = Entry {
        created_at: now_secs(),
        provider: req.provider.clone(),
        question: req.question.clone(),
        session,
        overlay_version: 0,
        hidden: BTreeSet::new(),
        dir,
    };
    entry.log(&ServiceEvent::Meta { provider: entry.provider.clone(), created_at: entry.created_at, question: entry.question.clone() })?;
    entry.log(&ServiceEvent::Session { event: entry.session.created_event() })?;
    let res = entry.resource();
    st.sessions.write().await.insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(res)))
}

async fn get_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionResource>, ApiError> {
    Ok(Json(st.entry(&id).await?.lock().await.resource()))
}

async fn list_turns(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Vec<TurnRecord>>, ApiError> {
    Ok(Json(st.entry(&id).await?.lock().await.session.turns.clone()))
}

async fn get_layers(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Vec<LayerView>>, ApiError> {
    Ok(Json(st.entry(&id).await?.lock().await.layers()))
}

async fn step_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Result<Json<TurnView>, ApiError> {
    let req: StepRequest = parse_json(&body)?;
    let new_image = req.image_base64.as_deref().map(decode_upload).transpose()?;
    let entry = st.entry(&id).await?;
    // Held across the model call: turns on one session never interleave.
    let mut guard = entry.lock_owned().await;
    let model = st
        .registry
        .get(&guard.provider)
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("provider {:?} is no longer configured", guard.provider)))?;
    let view = tokio::task::spawn_blocking(move || -> Result<TurnView, ApiError> {
        let e = &mut *guard;
        let before = e.session.turns.len();
        let err = e.session.step(model.as_ref(), req.user_text.as_deref(), new_image.clone()).err();
        if e.session.turns.len() == before {
            return Err(session_error(err.expect("no turn recorded only on error")));
        }
        let rec = e.session.turns.last().expect("turn recorded").clone();
        if let (Some(img), Some(sha)) = (&new_image, &rec.injected_image_sha256) {
            write_png(&e.dir.join("images").join(format!("{sha}.png")), img)?;
        }
        e.log(&ServiceEvent::Session { event: SessionEvent::Turn { record: rec.clone() } })?;
        e.note_turn(&rec);
        // A parse failure still produced a turn; the record reports it.
        Ok(TurnView { record: rec, session: e.resource(), layers: e.layers() })
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(view))
}

async fn get_image(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = st.entry(&id).await?;
    let png = entry.lock().await.session.base_image().to_png().map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn get_overlay(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let svg = st.entry(&id).await?.lock().await.overlay().to_svg();
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn patch_stroke(
    State(st): State<Arc<AppState>>,
    UrlPath((id, sid)): UrlPath<(String, String)>,
    body: Bytes,
) -> Result<Json<Vec<LayerView>>, ApiError> {
    let req: VisibilityRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad(format!("invalid request body: {e}")))?;
    let entry = st.entry(&id).await?;
    let mut e = entry.lock().await;
    if e.session.accumulated.stroke(&sid).is_none() {
        return Err(ApiError::bad(format!("no stroke {sid:?} in session {id}")));
    }
    if e.set_visible(&sid, req.visible) {
        e.log(&ServiceEvent::Visibility { stroke_id: sid, visible: req.visible })?;
    }
    Ok(Json(e.layers()))
}

async fn export(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let entry = st.entry(&id).await?;
    let e = entry.lock().await;
    let disposition = |ext: &str| format!("attachment; filename=\"{id}.{ext}\"");
    Ok(match q.format.as_str() {
        "svg" => ([(header::CONTENT_TYPE, "image/svg+xml".to_owned()), (header::CONTENT_DISPOSITION, disposition("overlay.svg"))], e.overlay().to_svg())
            .into_response(),
        "png" => {
            let img = composite(e.session.base_image(), &e.overlay()).map_err(ApiError::internal)?;
            ([(header::CONTENT_TYPE, "image/png".to_owned()), (header::CONTENT_DISPOSITION, disposition("png"))], img.to_png().map_err(ApiError::internal)?)
                .into_response()
        }
        "anno.json" | "json" => (
            [(header::CONTENT_TYPE, "application/json".to_owned()), (header::CONTENT_DISPOSITION, disposition("anno.json"))],
            serialize_annotation(&e.session.annotation(), Dialect::Json),
        )
            .into_response(),
        other => return Err(ApiError::bad(format!("unknown export format {other:?} (svg, png, anno.json)"))),
    })
}

/// Serves until Ctrl-C.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
