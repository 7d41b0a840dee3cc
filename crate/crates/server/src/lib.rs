//! HTTP front end for editing sessions.
//!
//! Every route is a thin wrapper over [`SessionStore`]; the store owns all
//! state and the journal. Errors are returned as JSON objects of the form
//! `{"error": kind, "message": text}` with optional `path` (the offending
//! field) and `feasible` (the interval a rejected value must fall in).

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prosody_core::engine::{EngineError, TargetRange};
use prosody_core::session::{Confidence, ExportFilter, SessionError, SessionStore};
use prosody_core::synth::{encode_wav, SynthBackend, SynthError, Synthesizer};
use prosody_core::track::{track_from_value, TrackError, UtteranceTrack};
use prosody_core::Edit;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    /// Used for sessions that were created without a backend of their own.
    pub synth: Synthesizer,
}

impl AppState {
    pub fn new(store: SessionStore, synth: Synthesizer) -> Self {
        Self { store: Arc::new(store), synth }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/stats", get(stats))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edits", post(post_edit))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/audio", get(audio))
        .route("/sessions/{id}/submit", post(submit))
        .route("/export", get(export))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasible: Option<TargetRange>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self { status, error, message: message.into(), path: None, feasible: None }
    }

    fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<TrackError> for ApiError {
    fn from(e: TrackError) -> Self {
        let err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_track", e.to_string());
        match e.path() {
            Some(p) => err.at(format!("track.{p}")),
            None => err,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let kind = match e {
            EngineError::RangeViolation { .. } | EngineError::DurationOutOfRange { .. } => "range_violation",
            _ => "invalid_edit",
        };
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, kind, e.to_string());
        err.feasible = e.feasible_interval();
        err
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownSession(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_session", e.to_string()),
            SessionError::Submitted => ApiError::new(StatusCode::CONFLICT, "submitted", e.to_string()),
            SessionError::MissingConfidence => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_confidence", e.to_string()).at("confidence")
            }
            SessionError::InvalidTrack(t) => t.into(),
            SessionError::Engine(engine) => engine.into(),
            SessionError::Journal(_) | SessionError::CorruptJournal { .. } => {
                tracing::error!(error = %e, "journal failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string())
            }
        }
    }
}

impl From<SynthError> for ApiError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Adapter(_)
            | SynthError::UnsupportedEncoding(_)
            | SynthError::MalformedWav(_)
            | SynthError::SampleRateMismatch { .. } => {
                tracing::warn!(error = %e, "synthesizer adapter failure");
                ApiError::new(StatusCode::BAD_GATEWAY, "synthesis", e.to_string())
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "synthesis", e.to_string()),
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed", e.inner().to_string());
        if path == "." {
            err
        } else {
            err.at(path)
        }
    })
}

type ApiResult<T> = Result<T, ApiError>;

async fn stats(State(state): State<AppState>) -> Json<prosody_core::CorpusStats> {
    Json(state.store.stats().clone())
}

#[derive(Deserialize)]
struct CreateRequest {
    track: Value,
    #[serde(default)]
    reference_audio: Option<PathBuf>,
    #[serde(default)]
    backend: Option<SynthBackend>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = parse_json(&body)?;
    let track = track_from_value(req.track)?;
    if let Some(path) = &req.reference_audio {
        if !path.is_file() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_reference",
                format!("reference audio {} does not exist", path.display()),
            )
            .at("reference_audio"));
        }
    }
    let id = state.store.create(track, req.reference_audio, req.backend)?;
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(state.store.view(&id)?)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(state.store.view(&id)?).into_response())
}

async fn post_edit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    // Unknown sessions are reported before body problems.
    state.store.view(&id)?;
    let edit: Edit = parse_json(&body)?;
    Ok(Json(state.store.apply_edit(&id, edit)?).into_response())
}

async fn reset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(state.store.reset(&id)?).into_response())
}

#[derive(Deserialize)]
struct AudioQuery {
    variant: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Reference,
    Original,
    Edited,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Variant::Reference),
            "original" => Ok(Variant::Original),
            "edited" => Ok(Variant::Edited),
            other => Err(format!("unknown variant {other:?}; expected reference, original or edited")),
        }
    }
}

fn wav_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response()
}

async fn audio(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<AudioQuery>,
) -> ApiResult<Response> {
    let variant: Variant = query
        .variant
        .as_deref()
        .unwrap_or("edited")
        .parse()
        .map_err(|m: String| ApiError::new(StatusCode::BAD_REQUEST, "bad_variant", m).at("variant"))?;
    let (baseline, current) = state.store.tracks(&id)?;
    let track: UtteranceTrack = match variant {
        Variant::Reference => {
            let path = state.store.reference_audio(&id)?.ok_or_else(|| {
                ApiError::new(StatusCode::NOT_FOUND, "no_reference", "session has no reference audio")
            })?;
            let bytes = tokio::fs::read(&path).await.map_err(|e| {
                ApiError::new(StatusCode::NOT_FOUND, "no_reference", format!("{}: {e}", path.display()))
            })?;
            return Ok(wav_response(bytes));
        }
        Variant::Original => baseline,
        Variant::Edited => current,
    };
    let mut synth = state.synth.clone();
    if let Some(backend) = state.store.backend(&id)? {
        synth.backend = backend;
    }
    let buffer = tokio::task::spawn_blocking(move || synth.synthesize(&track))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "synthesis", e.to_string()))??;
    Ok(wav_response(encode_wav(&buffer)))
}

#[derive(Deserialize)]
struct SubmitRequest {
    #[serde(default)]
    confidence: Option<String>,
}

async fn submit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let view = state.store.view(&id)?;
    if view.confidence.is_some() {
        return Err(SessionError::Submitted.into());
    }
    let req: SubmitRequest = if body.is_empty() { SubmitRequest { confidence: None } } else { parse_json(&body)? };
    let confidence = req
        .confidence
        .map(|c| c.parse::<Confidence>())
        .transpose()
        .map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_confidence", m).at("confidence"))?;
    Ok(Json(state.store.submit(&id, confidence)?).into_response())
}

async fn export(State(state): State<AppState>, Query(filter): Query<ExportFilter>) -> Json<prosody_core::CorpusExport> {
    Json(state.store.export(&filter))
}
