//! HTTP/JSON facade over the parser, the face-set generator and the edit engine.
//!
//! | method | path                       | body                                   |
//! |--------|----------------------------|----------------------------------------|
//! | GET    | `/health`                  |                                        |
//! | POST   | `/sessions`                | `{"model": mesh}` or `{"synthetic": {"seed", "features"}}` |
//! | GET    | `/sessions/{id}/mesh`      |                                        |
//! | POST   | `/sessions/{id}/parse`     | `{"text", "engine"}`                   |
//! | POST   | `/sessions/{id}/generate`  | `{"seed_face_id", "feature_type", "provider"}` |
//! | POST   | `/sessions/{id}/apply`     | `{"command", "face_ids"}`              |
//! | POST   | `/sessions/{id}/undo`      |                                        |
//!
//! Errors are `{"code", "message", "detail"}` with a matching HTTP status.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sdm_core::edit::{apply_ops, compile_api_calls, ApiCall};
use sdm_core::feature::vocabulary_names;
use sdm_core::geometry::synthetic::generate_model;
use sdm_core::geometry::{model_from_json, model_to_json, MeshModel};
use sdm_core::model::SdmModel;
use sdm_core::parser::{
    parse_with_grammar, parse_with_llm, validate_schema, Engine, FailureKind, LlmClient, ParseResult,
};
use sdm_core::text::{RemoteEmbedder, TextProvider};
use sdm_core::{Error, FeatureType};

pub const UNDO_DEPTH: usize = 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub port: u16,
    pub checkpoint: Option<PathBuf>,
    pub max_sessions: usize,
    pub llm: Option<LlmClient>,
    pub embedder: Option<RemoteEmbedder>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            checkpoint: None,
            max_sessions: 64,
            llm: None,
            embedder: None,
        }
    }
}

impl ServiceConfig {
    /// `SDM_PORT`, `SDM_CHECKPOINT`, `SDM_MAX_SESSIONS`, plus the LLM and
    /// embedding variables read by [`LlmClient::from_env`] and
    /// [`RemoteEmbedder::from_env`].
    pub fn from_env() -> Self {
        let d = Self::default();
        let var = |k: &str| std::env::var(k).ok().filter(|s| !s.is_empty());
        Self {
            port: var("SDM_PORT").and_then(|s| s.parse().ok()).unwrap_or(d.port),
            checkpoint: var("SDM_CHECKPOINT").map(PathBuf::from),
            max_sessions: var("SDM_MAX_SESSIONS")
                .and_then(|s| s.parse().ok())
                .unwrap_or(d.max_sessions),
            llm: LlmClient::from_env(),
            embedder: RemoteEmbedder::from_env(),
        }
    }
}

struct Session {
    model: MeshModel,
    undo: VecDeque<MeshModel>,
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    checkpoint: Option<Arc<SdmModel>>,
    max_sessions: usize,
    llm: Option<LlmClient>,
    embedder: Option<RemoteEmbedder>,
}

impl AppState {
    pub fn new(config: &ServiceConfig, checkpoint: Option<SdmModel>) -> Self {
        Self {
            sessions: RwLock::default(),
            checkpoint: checkpoint.map(Arc::new),
            max_sessions: config.max_sessions,
            llm: config.llm.clone(),
            embedder: config.embedder.clone(),
        }
    }

    /// Loads the configured checkpoint, if any.
    pub fn from_config(config: &ServiceConfig) -> sdm_core::Result<Self> {
        let model = config.checkpoint.as_deref().map(SdmModel::load).transpose()?;
        Ok(Self::new(config, model))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session '{id}'")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"code": self.code, "message": self.message, "detail": self.detail})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::bad_request("request body is not valid JSON for this endpoint")
            .detail(json!({"error": e.to_string()}))
    })
}

fn mesh_value(model: &MeshModel) -> Value {
    serde_json::from_str(&model_to_json(model)).expect("canonical mesh JSON parses")
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/mesh", get(get_mesh))
        .route("/sessions/{id}/parse", post(parse))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/apply", post(apply))
        .route("/sessions/{id}/undo", post(undo))
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until the process stops.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::from_config(&config).map_err(std::io::Error::other)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, checkpoint = state.checkpoint.is_some(), "listening");
    axum::serve(listener, router(Arc::new(state))).await
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    let sessions = s.sessions.read().unwrap_or_else(|e| e.into_inner()).len();
    Json(json!({
        "status": "ok",
        "checkpoint_loaded": s.checkpoint.is_some(),
        "llm_configured": s.llm.is_some(),
        "sessions": sessions,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticRequest {
    seed: u64,
    features: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    model: Option<Value>,
    synthetic: Option<SyntheticRequest>,
}

fn feature_type(name: &str) -> ApiResult<FeatureType> {
    FeatureType::ALL.into_iter().find(|t| t.name() == name).ok_or_else(|| {
        let types: Vec<_> = FeatureType::ALL.iter().map(|t| t.name()).collect();
        ApiError::bad_request(format!("unknown feature type '{name}'")).detail(json!({"vocabulary": types}))
    })
}

async fn create_session(State(s): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = body(&bytes)?;
    let model = match (req.model, req.synthetic) {
        (Some(m), None) => model_from_json(&m.to_string())
            .map_err(|e| ApiError::bad_request("invalid model").detail(json!({"error": e.to_string()})))?,
        (None, Some(syn)) => {
            let types = syn
                .features
                .iter()
                .map(|f| feature_type(f))
                .collect::<ApiResult<Vec<_>>>()?;
            generate_model(&format!("synthetic_{}", syn.seed), &types, syn.seed).map_err(|e| {
                ApiError::bad_request("could not build synthetic model").detail(json!({"error": e.to_string()}))
            })?
        }
        _ => return Err(ApiError::bad_request("give exactly one of 'model' or 'synthetic'")),
    };
    let id = uuid::Uuid::new_v4().to_string();
    let mesh = mesh_value(&model);
    {
        let mut sessions = s.sessions.write().unwrap_or_else(|e| e.into_inner());
        if sessions.len() >= s.max_sessions {
            return Err(ApiError::new(
                StatusCode::INSUFFICIENT_STORAGE,
                "session_limit",
                format!("session limit of {} reached", s.max_sessions),
            ));
        }
        sessions.insert(
            id.clone(),
            Arc::new(Mutex::new(Session {
                model,
                undo: VecDeque::new(),
            })),
        );
    }
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "mesh": mesh}))))
}

/// Raw canonical mesh bytes, so clients can compare payloads byte for byte.
async fn get_mesh(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = s.session(&id)?;
    let text = model_to_json(&session.lock().unwrap_or_else(|e| e.into_inner()).model);
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Deserialize)]
struct ParseRequest {
    text: String,
    #[serde(default)]
    engine: Option<String>,
}

async fn parse(State(s): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<ParseResult>> {
    s.session(&id)?;
    let req: ParseRequest = body(&bytes)?;
    let engine: Engine = req
        .engine
        .as_deref()
        .unwrap_or("grammar")
        .parse()
        .map_err(|e: Error| ApiError::bad_request(e.to_string()))?;
    let result = match engine {
        Engine::Grammar => parse_with_grammar(&req.text),
        Engine::Llm => {
            let client = s.llm.clone().ok_or_else(|| {
                ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "llm_unavailable",
                    "no LLM endpoint configured (SDM_LLM_ENDPOINT)",
                )
            })?;
            let text = req.text.clone();
            blocking(move || parse_with_llm(&text, &client)).await?
        }
    };
    match &result.failure {
        None => Ok(Json(result)),
        Some(f) if f.kind == FailureKind::Transport => {
            Err(
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "llm_unavailable", f.reason.clone())
                    .detail(serde_json::to_value(&result).expect("serializable")),
            )
        }
        Some(f) => Err(
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "parse_failed", f.reason.clone())
                .detail(serde_json::to_value(&result).expect("serializable")),
        ),
    }
}

#[derive(Deserialize)]
struct GenerateRequest {
    seed_face_id: usize,
    feature_type: String,
    #[serde(default)]
    provider: Option<String>,
}

async fn generate(State(s): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let session = s.session(&id)?;
    let req: GenerateRequest = body(&bytes)?;
    let model = s.checkpoint.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no_checkpoint",
            "no checkpoint loaded (SDM_CHECKPOINT)",
        )
    })?;
    let provider = match req.provider.as_deref().unwrap_or("local") {
        "local" => TextProvider::Local,
        "remote" => TextProvider::Remote(s.embedder.clone().ok_or_else(|| {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "embedder_unavailable",
                "no embedding endpoint configured",
            )
        })?),
        other => {
            return Err(ApiError::bad_request(format!(
                "unknown text provider '{other}' (local or remote)"
            )))
        }
    };
    let mesh = session.lock().unwrap_or_else(|e| e.into_inner()).model.clone();
    let result =
        blocking(move || model.generate_feature_faces(&mesh, req.seed_face_id, &req.feature_type, &provider)).await?;
    match result {
        Ok(r) => Ok(Json(serde_json::to_value(r).expect("serializable"))),
        Err(Error::UnknownFeature(t)) => Err(ApiError::bad_request(format!("unknown feature type '{t}'"))
            .detail(json!({"vocabulary": vocabulary_names()}))),
        Err(Error::Transport(e)) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "embedder_unavailable",
            e,
        )),
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}

/// One face set shared by every command entry, or one set per entry.
#[derive(Deserialize)]
#[serde(untagged)]
enum FaceTargets {
    Shared(BTreeSet<usize>),
    PerEntry(Vec<BTreeSet<usize>>),
}

#[derive(Deserialize)]
struct ApplyRequest {
    command: Value,
    face_ids: FaceTargets,
}

#[derive(Serialize)]
struct EditSummary {
    api_calls: Vec<ApiCall>,
    changed_face_ids: BTreeSet<usize>,
    deleted_face_ids: BTreeSet<usize>,
    remap: std::collections::BTreeMap<usize, usize>,
    undo_depth: usize,
}

async fn apply(State(s): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let session = s.session(&id)?;
    let req: ApplyRequest = body(&bytes)?;
    let command = validate_schema(&req.command).map_err(|v| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "schema_violation",
            "command violates the schema",
        )
        .detail(json!({"violations": v}))
    })?;
    let targets = match req.face_ids {
        FaceTargets::Shared(s) => vec![s],
        FaceTargets::PerEntry(v) => v,
    };
    let ops = compile_api_calls(&command, &targets).map_err(|e| ApiError::bad_request(e.to_string()))?;
    blocking(move || {
        // the writer lock is held across the edit so concurrent applies serialize
        let mut guard = session.lock().unwrap_or_else(|e| e.into_inner());
        let result = apply_ops(&guard.model, &ops).map_err(|e| match e {
            Error::InvalidArgument(m) => ApiError::bad_request(m),
            other => ApiError::new(StatusCode::CONFLICT, "edit_failed", other.to_string()),
        })?;
        let previous = std::mem::replace(&mut guard.model, result.model);
        guard.undo.push_back(previous);
        if guard.undo.len() > UNDO_DEPTH {
            guard.undo.pop_front();
        }
        let summary = EditSummary {
            api_calls: result.api_calls,
            changed_face_ids: result.changed_face_ids,
            deleted_face_ids: result.deleted_face_ids,
            remap: result.remap,
            undo_depth: guard.undo.len(),
        };
        Ok(Json(json!({"summary": summary, "mesh": mesh_value(&guard.model)})))
    })
    .await?
}

async fn undo(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = s.session(&id)?;
    let mut guard = session.lock().unwrap_or_else(|e| e.into_inner());
    let previous = guard
        .undo
        .pop_back()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "nothing_to_undo", "undo stack is empty"))?;
    guard.model = previous;
    Ok(Json(
        json!({"mesh": mesh_value(&guard.model), "undo_depth": guard.undo.len()}),
    ))
}
