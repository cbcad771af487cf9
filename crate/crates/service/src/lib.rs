//! HTTP service for rule dialogs and the reading-vs-agent study.

pub mod catalog;
pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rulechat_core::classify::{Heuristic, SurfaceLr, TurnClassifier};
use rulechat_core::dialog::{Answer, Reply};
use rulechat_core::entail::{EntailmentModel, Entailer, HeuristicEntailer};
use rulechat_core::pipeline::{AgentResponse, Components, RuleBasedGenerator};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, RuleCatalogEntry};
use crate::session::{now_ms, Conclusion, Mode, NewSession, Session, SessionLog, Status, TranscriptEntry};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("pipeline failed: {0}")]
    Pipeline(String),
    #[error("storage: {0}")]
    Io(String),
    #[error("corrupt session log: {0}")]
    Corrupt(String),
    #[error("startup: {0}")]
    Startup(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(ErrorBody { error: kind.into(), detail: self.to_string() })).into_response()
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(r: JsonRejection) -> Self {
        ServiceError::Validation(r.body_text())
    }
}

/// Classifier, generator and entailer shared by all sessions.
pub struct Engine {
    classifier: Box<dyn TurnClassifier>,
    entailer: Box<dyn Entailer>,
    generator: RuleBasedGenerator,
}

impl Engine {
    pub fn heuristic() -> Self {
        Self { classifier: Box::new(Heuristic::default()), entailer: Box::new(HeuristicEntailer::default()), generator: RuleBasedGenerator }
    }

    /// Saved models where paths are given, heuristics otherwise.
    pub fn load(classifier: Option<&Path>, entailer: Option<&Path>) -> Result<Self, ServiceError> {
        let mut e = Self::heuristic();
        if let Some(p) = classifier {
            e.classifier = Box::new(SurfaceLr::load(p).map_err(|err| ServiceError::Startup(format!("{}: {err}", p.display())))?);
        }
        if let Some(p) = entailer {
            e.entailer = Box::new(EntailmentModel::load(p).map_err(|err| ServiceError::Startup(format!("{}: {err}", p.display())))?);
        }
        Ok(e)
    }

    pub fn components(&self) -> Components<'_> {
        Components { classifier: self.classifier.as_ref(), generator: &self.generator, entailer: self.entailer.as_ref() }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    pub idle_timeout: Duration,
    pub static_dir: Option<PathBuf>,
}

type Shared = Arc<tokio::sync::Mutex<Session>>;

pub struct AppState {
    catalog: Catalog,
    engine: Engine,
    log: SessionLog,
    idle_timeout: Duration,
    sessions: Mutex<HashMap<String, Shared>>,
}

impl AppState {
    /// Opens the data directory and resumes every logged session.
    pub fn open(catalog: Catalog, engine: Engine, config: &Config) -> Result<Arc<Self>, ServiceError> {
        let log = SessionLog::new(&config.data_dir)?;
        let loaded = log.load_all(&catalog, engine.components())?;
        let sessions = loaded.into_iter().map(|s| (s.session_id.clone(), Arc::new(tokio::sync::Mutex::new(s)))).collect();
        Ok(Arc::new(Self { catalog, engine, log, idle_timeout: config.idle_timeout, sessions: Mutex::new(sessions) }))
    }

    fn session(&self, id: &str) -> Result<Shared, ServiceError> {
        self.sessions.lock().expect("session map").get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    /// Serializes operations per session: a concurrent second request gets
    /// a conflict instead of waiting.
    fn lock(&self, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Session>, ServiceError> {
        let s = self.session(id)?;
        let mut guard = s.try_lock_owned().map_err(|_| ServiceError::Conflict("another request is in progress for this session".into()))?;
        guard.expire_if_idle(&self.log, now_ms(), self.idle_timeout)?;
        Ok(guard)
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let r = Router::new()
        .route("/rules", get(list_rules))
        .route("/sessions", post(start_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/conclusion", post(post_conclusion))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route("/study/export", get(study_export))
        .with_state(state);
    match static_dir {
        Some(dir) => r.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => r,
    }
}

async fn list_rules(State(app): State<Arc<AppState>>) -> Json<Vec<RuleCatalogEntry>> {
    Json(app.catalog.entries.values().cloned().collect())
}

#[derive(Debug, Deserialize)]
pub struct StartRequest {
    pub rule_id: String,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Study item of the rule; supplies question, scenario and gold answer.
    #[serde(default)]
    pub item_id: Option<String>,
}

fn default_mode() -> Mode {
    Mode::Agent
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
    pub status: Status,
    pub mode: Mode,
    pub scenario: String,
    pub response: Option<AgentResponse>,
    /// Only in reading mode.
    pub rule_text: Option<String>,
}

async fn start_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<StartRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<StartResponse>), ServiceError> {
    let Json(req) = body?;
    let entry = app.catalog.entries.get(&req.rule_id).ok_or_else(|| ServiceError::NotFound(format!("rule {}", req.rule_id)))?;
    let (question, scenario, gold) = match &req.item_id {
        Some(item) => {
            let it = entry.items.iter().find(|i| &i.item_id == item).ok_or_else(|| ServiceError::NotFound(format!("item {item}")))?;
            (it.question.clone(), it.scenario.clone(), Some(it.answer))
        }
        None => (req.question.clone().unwrap_or_default(), req.scenario.clone().unwrap_or_default(), None),
    };
    let new = NewSession { rule_id: req.rule_id.clone(), question, scenario, mode: req.mode, item_id: req.item_id.clone(), gold };
    let s = Session::create(&app.log, &app.catalog, app.engine.components(), new)?;
    let out = StartResponse {
        session_id: s.session_id.clone(),
        status: s.status,
        mode: s.mode,
        scenario: s.scenario.clone(),
        response: s.events.iter().rev().find_map(|e| match e {
            session::Event::Agent { response, .. } => Some(response.clone()),
            _ => None,
        }),
        rule_text: (s.mode == Mode::Reading).then(|| entry.rule_text.clone()),
    };
    app.sessions.lock().expect("session map").insert(s.session_id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(out)))
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub reply: Reply,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub session_id: String,
    pub status: Status,
    pub response: AgentResponse,
}

async fn post_answer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ServiceError> {
    let Json(req) = body?;
    let mut s = app.lock(&id)?;
    let response = s.reply(&app.log, app.engine.components(), req.reply)?;
    Ok(Json(AnswerResponse { session_id: id, status: s.status, response }))
}

#[derive(Debug, Deserialize)]
pub struct ConclusionRequest {
    pub answer: Reply,
    #[serde(default)]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConclusionResponse {
    pub session_id: String,
    pub status: Status,
    #[serde(flatten)]
    pub conclusion: Conclusion,
}

async fn post_conclusion(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ConclusionRequest>, JsonRejection>,
) -> Result<Json<ConclusionResponse>, ServiceError> {
    let Json(req) = body?;
    let mut s = app.lock(&id)?;
    let conclusion = s.conclude(&app.log, req.answer, req.elapsed_ms)?;
    Ok(Json(ConclusionResponse { session_id: id, status: s.status, conclusion }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptView {
    pub session_id: String,
    pub rule_id: String,
    pub mode: Mode,
    pub status: Status,
    pub question: String,
    pub scenario: String,
    pub rule_text: Option<String>,
    pub turns: Vec<TranscriptEntry>,
    pub pending_followup: Option<String>,
    pub final_answer: Option<Answer>,
    pub conclusion: Option<Conclusion>,
    pub abort_reason: Option<String>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

async fn get_transcript(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<TranscriptView>, ServiceError> {
    let s = app.lock(&id)?;
    let rule_text = (s.mode == Mode::Reading).then(|| app.catalog.entries.get(&s.rule_id).map(|e| e.rule_text.clone())).flatten();
    Ok(Json(TranscriptView {
        session_id: s.session_id.clone(),
        rule_id: s.rule_id.clone(),
        mode: s.mode,
        status: s.status,
        question: s.question.clone(),
        scenario: s.scenario.clone(),
        rule_text,
        turns: s.transcript.clone(),
        pending_followup: s.pending_followup().map(str::to_string),
        final_answer: s.final_answer.clone(),
        conclusion: s.conclusion.clone(),
        abort_reason: s.abort_reason.clone(),
        created_at_ms: s.created_at_ms,
        updated_at_ms: s.updated_at_ms,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub session_id: String,
    pub arm: Mode,
    pub rule_id: String,
    pub item_id: Option<String>,
    pub user_answer: Reply,
    pub correct: Option<bool>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub records: usize,
    pub mean_elapsed_ms: f64,
    /// Over records with a gold answer; `None` when there are none.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyExport {
    pub records: Vec<StudyRecord>,
    pub arms: BTreeMap<String, ArmSummary>,
    pub aborted: usize,
}

/// Per-arm mean time and accuracy over concluded sessions. Aborted sessions
/// are counted but left out of the means.
pub fn summarize(records: &[StudyRecord]) -> BTreeMap<String, ArmSummary> {
    let mut out = BTreeMap::new();
    for (arm, name) in [(Mode::Agent, "agent"), (Mode::Reading, "reading")] {
        let rs: Vec<&StudyRecord> = records.iter().filter(|r| r.arm == arm).collect();
        if rs.is_empty() {
            continue;
        }
        let graded: Vec<bool> = rs.iter().filter_map(|r| r.correct).collect();
        out.insert(
            name.to_string(),
            ArmSummary {
                records: rs.len(),
                mean_elapsed_ms: rs.iter().map(|r| r.elapsed_ms).sum::<f64>() / rs.len() as f64,
                accuracy: (!graded.is_empty()).then(|| graded.iter().filter(|c| **c).count() as f64 / graded.len() as f64),
            },
        );
    }
    out
}

async fn study_export(State(app): State<Arc<AppState>>) -> Result<Json<StudyExport>, ServiceError> {
    let all: Vec<Shared> = app.sessions.lock().expect("session map").values().cloned().collect();
    let mut records = Vec::new();
    let mut aborted = 0;
    for shared in all {
        let mut s = shared.lock().await;
        s.expire_if_idle(&app.log, now_ms(), app.idle_timeout)?;
        if s.status == Status::Aborted {
            aborted += 1;
            continue;
        }
        if let Some(c) = &s.conclusion {
            records.push(StudyRecord {
                session_id: s.session_id.clone(),
                arm: s.mode,
                rule_id: s.rule_id.clone(),
                item_id: s.item_id.clone(),
                user_answer: c.answer,
                correct: c.correct,
                elapsed_ms: c.elapsed_ms,
            });
        }
    }
    records.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(Json(StudyExport { arms: summarize(&records), records, aborted }))
}
