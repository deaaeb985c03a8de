//! HTTP service for mood board sessions.
//!
//! Every request body and response is JSON except `GET /sessions/{id}/log`
//! (JSON Lines) and `GET /images/{id}` (raw image bytes). Actions on one
//! session are serialized by a per-session mutex; different sessions run
//! concurrently.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mbc_core::imagery::{CorpusManifest, ImageryError};
use mbc_core::session::{
    ActionOutcome, CreateParams, DirStorage, ErrorClass, IterationRecord, NullStorage,
    SessionError, SessionStorage, SessionView,
};
use mbc_core::{Action, Config, Services, Session};
use serde::Serialize;
use serde_json::json;

pub struct AppState {
    services: Services,
    /// Set when images come from a local corpus; enables `/images/{id}`.
    corpus: Option<Arc<CorpusManifest>>,
    /// Session directories live here when set; otherwise sessions are memory-only.
    data_dir: Option<PathBuf>,
    /// Used when a create request carries no config.
    default_config: Config,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(services: Services, default_config: Config) -> Self {
        Self {
            services,
            corpus: None,
            data_dir: None,
            default_config,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_corpus(mut self, corpus: Arc<CorpusManifest>) -> Self {
        self.corpus = Some(corpus);
        self
    }

    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    fn fresh_id(&self, params: &CreateParams) -> String {
        loop {
            let n = self.next_id.fetch_add(1, Ordering::Relaxed);
            let id = format!("{}-{n:04}", params.kind);
            let taken = self
                .sessions
                .read()
                .expect("session table poisoned")
                .contains_key(&id)
                || self.data_dir.as_ref().is_some_and(|d| d.join(&id).exists());
            if !taken {
                return id;
            }
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/next", post(post_next))
        .route("/sessions/{id}/export", get(get_export))
        .route("/sessions/{id}/log", get(get_log))
        .route("/images/{id}", get(get_image))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e.class() {
            ErrorClass::Validation => StatusCode::BAD_REQUEST,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Unsupported => StatusCode::CONFLICT,
            ErrorClass::Upstream => StatusCode::BAD_GATEWAY,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Run blocking session work (which may call remote services) off the
/// async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn with_session<T>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session, &Services) -> ApiResult<T>,
) -> ApiResult<T> {
    let session = state.session(id)?;
    let mut guard = session.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut guard, &state.services)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let mut params: CreateParams = parse_body(&body)?;
    blocking(move || {
        if params.config.is_none() {
            params.config = Some(state.default_config.clone());
        }
        let id = state.fresh_id(&params);
        let storage: Box<dyn SessionStorage> = match &state.data_dir {
            Some(dir) => Box::new(DirStorage::create(dir, &id).map_err(SessionError::Storage)?),
            None => Box::new(NullStorage),
        };
        let session = Session::create(&state.services, id.clone(), params, storage)?;
        tracing::info!(session = %id, kind = %session.kind(), "session created");
        let view = session.view();
        state
            .sessions
            .write()
            .expect("session table poisoned")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok((StatusCode::CREATED, Json(view)).into_response())
    })
    .await
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s, _| Ok(Json(s.view())))
}

async fn post_action(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let action: Action = parse_body(&body)?;
    if !matches!(
        action,
        Action::Move { .. } | Action::Delete { .. } | Action::Strike { .. }
    ) {
        return Err(ApiError::bad_request(format!(
            "{action} has its own endpoint; this one accepts move, delete and strike"
        )));
    }
    blocking(move || {
        with_session(&state, &id, |s, services| {
            s.apply(services, action)?;
            Ok(Json(s.view()))
        })
    })
    .await
}

#[derive(Serialize)]
struct NextResponse {
    session: SessionView,
    record: IterationRecord,
}

async fn post_next(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    blocking(move || {
        with_session(&state, &id, |s, services| {
            match s.apply(services, Action::Next)? {
                ActionOutcome::Iterated(record) => Ok(Json(NextResponse {
                    session: s.view(),
                    record: *record,
                })
                .into_response()),
                other => unreachable!("next produced {other:?}"),
            }
        })
    })
    .await
}

async fn get_export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    blocking(move || {
        with_session(&state, &id, |s, services| {
            match s.apply(services, Action::Export)? {
                ActionOutcome::Exported(doc) => Ok(Json(*doc).into_response()),
                other => unreachable!("export produced {other:?}"),
            }
        })
    })
    .await
}

async fn get_log(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let text = with_session(&state, &id, |s, _| Ok(s.log_jsonl()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn get_image(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let Some(corpus) = state.corpus.clone() else {
        return Err(ApiError::not_found(
            "images are not served without a local corpus",
        ));
    };
    let path = corpus
        .image_path(&id)
        .map_err(|_| ApiError::not_found(format!("no image {id:?}")))?;
    let bytes = corpus.image_bytes(&id).map_err(|e| match e {
        ImageryError::NotFound(_) => ApiError::not_found(e.to_string()),
        e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}
