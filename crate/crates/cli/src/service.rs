//! Request handling for the audit service, independent of any transport.
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | |
//! | POST | `/sessions` | [`CreateSession`] |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/responses` | [`SubmitResponses`] |
//! | POST | `/sessions/{id}/decision` | [`SubmitDecision`] |
//! | POST | `/sessions/{id}/predict` | |
//! | GET | `/sessions/{id}/summary` | |
//! | GET | `/sessions/{id}/log` | |
//!
//! Every JSON response carries the session status next to the step the
//! client should render.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use friend_audit_core::domain::{DecisionKind, IgnoreReason, ResponseSet};
use friend_audit_core::features::SocialSnapshot;
use friend_audit_core::learning::ModelBundle;
use friend_audit_core::session::{
    parse_log, AuditSession, Mode, SessionConfig, SessionRequest, DEFAULT_SAMPLE_SIZE,
};

use crate::api::{ApiError, ErrorCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<String>,
    pub participant_id: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub attention_passed: bool,
}

fn default_mode() -> Mode {
    Mode::Questionnaire
}

fn default_sample_size() -> usize {
    DEFAULT_SAMPLE_SIZE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitResponses {
    pub friend_id: String,
    pub responses: ResponseSet,
    pub timings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitDecision {
    pub friend_id: String,
    pub decision: DecisionKind,
    #[serde(default)]
    pub ignore_reason: Option<IgnoreReason>,
    #[serde(default)]
    pub seconds: Option<f64>,
}

/// One scripted client action, as used by `audit --script`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ScriptStep {
    Responses(SubmitResponses),
    Decision(SubmitDecision),
}

impl ScriptStep {
    pub fn apply(&self, session: &mut AuditSession) -> Result<Value, ApiError> {
        match self {
            ScriptStep::Responses(r) => {
                let suggestion = session.submit_responses(&r.friend_id, r.responses, r.timings.clone())?;
                Ok(json!({ "suggestion": suggestion }))
            }
            ScriptStep::Decision(d) => {
                let state = session.submit_decision(&d.friend_id, d.decision, d.ignore_reason, d.seconds)?;
                Ok(json!({ "state": state }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Response {
    fn json(status: u16, value: &Value) -> Self {
        Response {
            status,
            content_type: "application/json",
            body: serde_json::to_string(value).expect("json values serialize"),
        }
    }

    fn error(e: &ApiError) -> Self {
        Response {
            status: e.status(),
            content_type: "application/json",
            body: serde_json::to_string(e).expect("errors serialize"),
        }
    }
}

type Shared = Arc<Mutex<AuditSession>>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // a panic mid-request leaves the session as it was before the call
    // because every session operation validates before mutating
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Snapshot-scoped audit service with an in-memory session store.
///
/// Requests for one session are serialized by that session's mutex; the
/// store lock is only held to look sessions up or insert them.
pub struct Service {
    snapshot: SocialSnapshot,
    config: SessionConfig,
    models: Option<ModelBundle>,
    store_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Shared>>,
    counter: Mutex<u64>,
}

impl Service {
    pub fn new(snapshot: SocialSnapshot, config: SessionConfig) -> Self {
        Service {
            snapshot,
            config,
            models: None,
            store_dir: None,
            sessions: Mutex::new(HashMap::new()),
            counter: Mutex::new(0),
        }
    }

    pub fn with_models(mut self, models: ModelBundle) -> Self {
        self.models = Some(models);
        self
    }

    /// Persists each session log under `dir` and reloads the logs already
    /// there by replaying them.
    pub fn with_store(mut self, dir: &Path) -> Result<Self, String> {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut loaded = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for entry in entries {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let session = parse_log(&text)
                .and_then(|log| AuditSession::replay(&log, &self.config.table))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            loaded.insert(session.id().to_string(), Arc::new(Mutex::new(session)));
        }
        self.sessions = Mutex::new(loaded);
        self.store_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    /// Copy of a session's current log.
    pub fn log_jsonl(&self, id: &str) -> Option<String> {
        let shared = lock(&self.sessions).get(id).cloned()?;
        let text = lock(&shared).log_jsonl();
        Some(text)
    }

    pub fn handle(&self, method: &str, path: &str, body: &str) -> Response {
        let path = path.split('?').next().unwrap_or("");
        let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
        let result = match (method, parts.as_slice()) {
            ("GET", ["health"]) => Ok(Response::json(
                200,
                &json!({ "status": "ok", "sessions": self.session_count() }),
            )),
            ("POST", ["sessions"]) => self.create(body),
            ("GET", ["sessions", id]) => self.with_session(id, |s| Ok(step_body(s, json!({})))),
            ("GET", ["sessions", id, "log"]) => {
                self.with_session(id, |s| {
                    Ok(Response {
                        status: 200,
                        content_type: "application/x-ndjson",
                        body: s.log_jsonl(),
                    })
                })
            }
            ("GET", ["sessions", id, "summary"]) => self.with_session(id, |s| {
                let summary = s.summary()?;
                Ok(Response::json(
                    200,
                    &json!({ "session_id": s.id(), "status": s.status(), "summary": summary }),
                ))
            }),
            ("POST", ["sessions", id, "responses"]) => {
                let step = parse_body(body).map(ScriptStep::Responses);
                step.and_then(|step| self.mutate(id, |s| step.apply(s)))
            }
            ("POST", ["sessions", id, "decision"]) => {
                let step = parse_body(body).map(ScriptStep::Decision);
                step.and_then(|step| self.mutate(id, |s| step.apply(s)))
            }
            ("POST", ["sessions", id, "predict"]) => self.mutate(id, |s| {
                let models = self
                    .models
                    .as_ref()
                    .ok_or_else(|| ApiError::new(ErrorCode::Conflict, "service was started without models"))?;
                let surfaced = s.run_wild(models, &self.snapshot)?;
                let suggestions: Vec<_> = surfaced.into_iter().map(|(_, s)| s).collect();
                Ok(json!({ "suggestions": suggestions }))
            }),
            (_, ["health"]) | (_, ["sessions", ..]) => Err(ApiError::new(
                ErrorCode::NotFound,
                format!("{method} is not supported on {path}"),
            )),
            _ => Err(ApiError::not_found(format!("no resource at {path}"))),
        };
        result.unwrap_or_else(|e| Response::error(&e))
    }

    fn create(&self, body: &str) -> Result<Response, ApiError> {
        let req: CreateSession = parse_body(body)?;
        let mut sessions = lock(&self.sessions);
        let session_id = match req.session_id {
            Some(id) => {
                check_id(&id)?;
                if sessions.contains_key(&id) {
                    return Err(ApiError::new(ErrorCode::Conflict, format!("session {id:?} already exists"))
                        .with_detail(json!({ "session_id": id })));
                }
                id
            }
            None => {
                let mut n = lock(&self.counter);
                loop {
                    *n += 1;
                    let id = format!("s{:04}", *n);
                    if !sessions.contains_key(&id) {
                        break id;
                    }
                }
            }
        };
        let request = SessionRequest {
            session_id: session_id.clone(),
            participant_id: req.participant_id,
            mode: req.mode,
            sample_size: req.sample_size,
            seed: req.seed,
            attention_passed: req.attention_passed,
        };
        let session = AuditSession::create(&self.snapshot, &request, &self.config)?;
        self.persist(&session)?;
        let response = step_body(&session, json!({}));
        sessions.insert(session_id, Arc::new(Mutex::new(session)));
        Ok(Response { status: 201, ..response })
    }

    fn find(&self, id: &str) -> Result<Shared, ApiError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")).with_detail(json!({ "session_id": id })))
    }

    fn with_session(
        &self,
        id: &str,
        f: impl FnOnce(&AuditSession) -> Result<Response, ApiError>,
    ) -> Result<Response, ApiError> {
        let shared = self.find(id)?;
        let session = lock(&shared);
        f(&session)
    }

    fn mutate(
        &self,
        id: &str,
        f: impl FnOnce(&mut AuditSession) -> Result<Value, ApiError>,
    ) -> Result<Response, ApiError> {
        let shared = self.find(id)?;
        let mut session = lock(&shared);
        let extra = f(&mut session)?;
        self.persist(&session)?;
        Ok(step_body(&session, extra))
    }

    fn persist(&self, session: &AuditSession) -> Result<(), ApiError> {
        let Some(dir) = &self.store_dir else {
            return Ok(());
        };
        let path = dir.join(format!("{}.jsonl", session.id()));
        std::fs::write(&path, session.log_jsonl()).map_err(|e| {
            ApiError::new(ErrorCode::Invariant, format!("could not persist session: {e}"))
        })
    }
}

fn step_body(session: &AuditSession, extra: Value) -> Response {
    let mut body = json!({
        "session_id": session.id(),
        "status": session.status(),
        "mode": session.mode(),
        "next": session.next_step(),
    });
    if let (Value::Object(out), Value::Object(more)) = (&mut body, extra) {
        out.extend(more);
    }
    Response::json(200, &body)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| {
        ApiError::bad_request("malformed request body").with_detail(json!({
            "error": e.to_string(),
            "line": e.line(),
            "column": e.column(),
        }))
    })
}

/// Session ids become file names when a store is configured.
fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request("session_id must be 1-64 characters of [A-Za-z0-9_-]")
            .with_detail(json!({ "session_id": id })))
    }
}
