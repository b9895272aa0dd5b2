//! HTTP study server.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use blockies_core::blocky::DiagnosisLabel;
use blockies_core::metrics::Phase;
use blockies_core::study::{assign_condition, SessionError, SessionState, StudyPlan, Submission, TrialView};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::config::StudyDefinition;
use crate::pipeline::read_plan;
use crate::report::{session_export, SessionExport};
use crate::store::{new_token, session_id_for, SessionStore};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0))
}

#[derive(Clone)]
pub struct ServerConfig {
    pub study: StudyDefinition,
    pub data_dir: PathBuf,
    pub admin_token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

struct Inner {
    study: StudyDefinition,
    plan: StudyPlan,
    store: SessionStore,
    sessions: std::sync::Mutex<HashMap<String, Arc<Mutex<SessionState>>>>,
    /// Sessions created so far per stratum; also serializes creation.
    strata: Mutex<BTreeMap<String, u64>>,
    admin_token: Option<String>,
    clock: Clock,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Loads the plan and replays every stored session.
    pub fn load(cfg: &ServerConfig, clock: Clock) -> Result<Self> {
        let plan = read_plan(&cfg.study.plan)?;
        let store = SessionStore::open(&cfg.data_dir)?;
        let mut sessions = HashMap::new();
        let mut strata = BTreeMap::new();
        for s in store.load_all(&plan)? {
            *strata.entry(s.stratum.clone()).or_insert(0) += 1;
            sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        tracing::info!(sessions = sessions.len(), plan = %plan.hash(), "study loaded");
        Ok(AppState(Arc::new(Inner {
            study: cfg.study.clone(),
            plan,
            store,
            sessions: std::sync::Mutex::new(sessions),
            strata: Mutex::new(strata),
            admin_token: cfg.admin_token.clone(),
            clock,
        })))
    }

    fn session(&self, token: &str) -> Result<Arc<Mutex<SessionState>>, ApiError> {
        let id = session_id_for(token);
        self.0.sessions.lock().expect("session map").get(&id).cloned().ok_or(ApiError::UnknownToken)
    }
}

#[derive(Debug)]
pub enum ApiError {
    UnknownToken,
    Unauthorized,
    NotFound(String),
    Invalid(String),
    Conflict { code: &'static str, message: String },
    Closed,
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError::Internal(e)
    }
}

impl From<blockies_core::Error> for ApiError {
    fn from(e: blockies_core::Error) -> Self {
        match e {
            blockies_core::Error::Session(s) => {
                let code = match s {
                    SessionError::Done => "session_done",
                    SessionError::OutOfOrder { .. } => "out_of_order",
                    SessionError::NotPresented(_) => "not_presented",
                    SessionError::QuestionnaireTooEarly => "questionnaire_too_early",
                    SessionError::Log(_) => "invalid_state",
                };
                ApiError::Conflict { code, message: s.to_string() }
            }
            other => ApiError::Internal(other.into()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::UnknownToken => (StatusCode::NOT_FOUND, "unknown_token", "no session for this token".to_string()),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", "admin token required".to_string()),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", m),
            ApiError::Conflict { code, message } => (StatusCode::CONFLICT, code, message),
            ApiError::Closed => (StatusCode::FORBIDDEN, "study_closed", "the study is not accepting participants".to_string()),
            ApiError::Internal(e) => {
                tracing::error!(error = %format!("{e:#}"), "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error".to_string())
            }
        };
        (status, Json(json!({ "error": { "code": code, "message": message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, turning schema errors into structured 422 responses.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    participant: String,
    #[serde(default)]
    stratum: Option<String>,
    #[serde(default)]
    demographics: Value,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    token: String,
    session_id: String,
    seq: u64,
    phase: Phase,
    narrative: String,
    max_bonus: f64,
    phase_lengths: BTreeMap<&'static str, usize>,
}

async fn create_session(State(app): State<AppState>, body: axum::body::Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = parse_body(&body)?;
    let inner = &app.0;
    if inner.study.closed {
        return Err(ApiError::Closed);
    }
    if req.participant.trim().is_empty() {
        return Err(ApiError::Invalid("participant must not be empty".into()));
    }
    let stratum = req.stratum.unwrap_or_else(|| "unspecified".into());
    if !inner.study.strata.is_empty() && !inner.study.strata.contains(&stratum) {
        return Err(ApiError::Invalid(format!("unknown stratum {stratum:?}")));
    }

    let mut strata = inner.strata.lock().await;
    let index = strata.get(&stratum).copied().unwrap_or(0);
    let condition = assign_condition(inner.study.assignment_seed, &stratum, index);
    let token = new_token()?;
    let session_id = session_id_for(&token);
    let event = SessionState::created_event(
        session_id.clone(),
        req.participant,
        stratum.clone(),
        condition,
        &inner.plan,
        req.demographics,
    );
    let state = SessionState::replay(&inner.plan, [&event])?;
    inner.store.create(&session_id, &event)?;
    strata.insert(stratum, index + 1);
    drop(strata);

    let settings = inner.plan.design.settings(condition);
    let created = SessionCreated {
        token,
        session_id: session_id.clone(),
        seq: state.seq,
        phase: state.phase,
        narrative: settings.texts.narrative.clone(),
        max_bonus: settings.bonus.max_amount,
        phase_lengths: [
            ("tutorial", inner.plan.tutorial.len()),
            ("baseline", inner.plan.baseline_order.len()),
            ("ai_supported", inner.plan.ai_order.len()),
        ]
        .into_iter()
        .collect(),
    };
    inner.sessions.lock().expect("session map").insert(session_id, Arc::new(Mutex::new(state)));
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Serialize)]
struct TrialResponse {
    seq: u64,
    image_url: String,
    trial: TrialView,
}

async fn get_trial(State(app): State<AppState>, Path(token): Path<String>) -> ApiResult<Json<TrialResponse>> {
    let session = app.session(&token)?;
    let mut s = session.lock().await;
    let (view, event) = s.present(&app.0.plan, (app.0.clock)())?;
    if let Some(ev) = event {
        let mut next = s.clone();
        next.apply(&app.0.plan, &ev)?;
        app.0.store.append(&s.session_id, &ev)?;
        *s = next;
    }
    Ok(Json(TrialResponse { seq: s.seq, image_url: format!("/media/{}", view.image), trial: view }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionRequest {
    sample_id: String,
    label: String,
    #[serde(default)]
    client_elapsed_ms: Option<u64>,
    #[serde(default)]
    phase: Option<Phase>,
    #[serde(default)]
    checklist: Option<Value>,
}

#[derive(Debug, Serialize)]
struct DecisionAck {
    seq: u64,
    sample_id: String,
    duplicate: bool,
    phase: Phase,
    done: bool,
    /// "trial" while trials remain, then "questionnaire".
    next: &'static str,
}

async fn post_decision(State(app): State<AppState>, Path(token): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<DecisionAck>> {
    let req: DecisionRequest = parse_body(&body)?;
    let label: DiagnosisLabel = req
        .label
        .parse()
        .map_err(|_| ApiError::Invalid(format!("label must be \"healthy\" or \"sick\", got {:?}", req.label)))?;
    let session = app.session(&token)?;
    let mut s = session.lock().await;
    let plan = &app.0.plan;
    let now = (app.0.clock)();
    let duplicate = match s.decide(plan, req.phase, &req.sample_id, label, req.client_elapsed_ms, req.checklist, now)? {
        Submission::Accepted { event, .. } => {
            let mut next = s.clone();
            next.apply(plan, &event)?;
            app.0.store.append(&s.session_id, &event)?;
            *s = next;
            false
        }
        Submission::Duplicate { .. } => true,
    };
    let done = s.phase == Phase::Done;
    Ok(Json(DecisionAck {
        seq: s.seq,
        sample_id: req.sample_id,
        duplicate,
        phase: s.phase,
        done,
        next: if done { "questionnaire" } else { "trial" },
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionnaireRequest {
    name: String,
    payload: Value,
}

async fn post_questionnaire(State(app): State<AppState>, Path(token): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    let req: QuestionnaireRequest = parse_body(&body)?;
    let session = app.session(&token)?;
    let mut s = session.lock().await;
    let ev = s.questionnaire(req.name, req.payload)?;
    let mut next = s.clone();
    next.apply(&app.0.plan, &ev)?;
    app.0.store.append(&s.session_id, &ev)?;
    *s = next;
    Ok(Json(json!({ "seq": s.seq, "completion_code": s.completion_code() })))
}

#[derive(Debug, Serialize)]
pub struct StudyResults {
    pub study_id: String,
    pub plan_hash: String,
    pub sessions: Vec<SessionExport>,
}

async fn get_results(State(app): State<AppState>, Path(study_id): Path<String>, headers: HeaderMap) -> ApiResult<Json<StudyResults>> {
    let expected = app.0.admin_token.as_deref().ok_or(ApiError::Unauthorized)?;
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ApiError::Unauthorized)?;
    if !constant_time_eq(given.as_bytes(), expected.as_bytes()) {
        return Err(ApiError::Unauthorized);
    }
    if study_id != app.0.study.study_id {
        return Err(ApiError::NotFound(format!("no study {study_id:?}")));
    }
    let handles: Vec<_> = app.0.sessions.lock().expect("session map").values().cloned().collect();
    let mut sessions = Vec::with_capacity(handles.len());
    for h in handles {
        let s = h.lock().await.clone();
        sessions.push(session_export(&s, &app.0.plan)?);
    }
    sessions.sort_by(|a, b| a.meta.session_id.cmp(&b.meta.session_id));
    Ok(Json(StudyResults { study_id, plan_hash: app.0.plan.hash(), sessions }))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn valid_media_name(name: &str) -> bool {
    !name.is_empty() && !name.starts_with('.') && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

async fn get_media(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult<Response> {
    let known = valid_media_name(&name) && app.0.plan.samples.values().any(|s| s.image == name);
    if !known {
        return Err(ApiError::NotFound(format!("no image {name:?}")));
    }
    let path = app.0.study.media.join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::Internal(anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok((
        [(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")],
        bytes,
    )
        .into_response())
}

pub fn router(app: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{token}/trial", get(get_trial))
        .route("/api/sessions/{token}/decision", post(post_decision))
        .route("/api/sessions/{token}/questionnaire", post(post_questionnaire))
        .route("/api/admin/studies/{id}/results", get(get_results))
        .route("/media/{image}", get(get_media))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until ctrl-c. Prints the bound address on stdout.
pub async fn serve(cfg: ServerConfig, bind: SocketAddr) -> Result<()> {
    let app = AppState::load(&cfg, system_clock())?;
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    use std::io::Write as _;
    std::io::stdout().flush()?;
    axum::serve(listener, router(app, cfg.static_dir.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
