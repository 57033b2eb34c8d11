//! HTTP API.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | `{instruction, ablation?}` |
//! | POST | `/sessions/{id}/turns` | `{text}` |
//! | POST | `/sessions/{id}/feedback` | `{turn_index, rating, comment?, rejected?}` |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/end` | |
//! | GET | `/export?view=trainee\|instructor&include_sensitive=&session=` | |
//!
//! Errors are `{code, message}`. Every trainee-facing payload passes through
//! the sensitive-label scrub; the instructor export requires the bearer
//! token and only shows sensitive labels when `include_sensitive=true`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use callsim::clock::Clock;
use callsim::engine::Engine;
use callsim::generation::GenerationError;
use callsim::validation::{redact_text, redact_value, trainee_payload, ReportSummary, SessionState, ValidationError};
use callsim::{Ablation, SimulationInstruction};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::record::{Event, SessionRecord};
use crate::store::{EventStore, StoreError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        use ValidationError as V;
        let (status, code) = match &e {
            V::NotActive(_) | V::AwaitingCalltaker | V::NotRejected(_) | V::NotLatestCallerTurn => {
                (StatusCode::CONFLICT, "session_state")
            }
            V::EmptyTraineeTurn | V::InvalidTurn(_) | V::NotCallerTurn(_) | V::RatingOutOfRange(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")
            }
            V::Generation(GenerationError::Tags(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_tags"),
            V::Backend { .. } | V::Generation(GenerationError::Transport(_)) => {
                (StatusCode::BAD_GATEWAY, "backend_unavailable")
            }
            V::Generation(_) => (StatusCode::INTERNAL_SERVER_ERROR, "generation_failed"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::invalid(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::invalid(e.body_text())
    }
}

type Slot = Arc<Mutex<SessionRecord>>;

pub struct AppState {
    pub engine: Engine,
    pub store: EventStore,
    clock: Arc<dyn Clock>,
    instructor_token: Option<String>,
    default_ablation: Ablation,
    sessions: Mutex<HashMap<String, Slot>>,
}

impl AppState {
    /// Rebuilds every stored session from its event file.
    pub fn new(
        engine: Engine,
        store: EventStore,
        clock: Arc<dyn Clock>,
        instructor_token: Option<String>,
        default_ablation: Ablation,
    ) -> Result<Self, StoreError> {
        let mut sessions = HashMap::new();
        for id in store.ids()? {
            let record = store.load(&id)?;
            sessions.insert(id, Arc::new(Mutex::new(record)));
        }
        Ok(Self { engine, store, clock, instructor_token, default_ablation, sessions: Mutex::new(sessions) })
    }

    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        self.sessions.lock().expect("session map lock").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn redacted(&self, mut v: Value) -> Value {
        redact_value(&mut v, &self.engine.knowledge.taxonomy);
        v
    }

    fn view(&self, r: &SessionRecord) -> Value {
        let mut v = trainee_payload(&r.session, &self.engine.knowledge.taxonomy);
        let obj = v.as_object_mut().expect("view is an object");
        obj.insert("created_ms".into(), json!(r.created_ms));
        obj.insert("updated_ms".into(), json!(r.updated_ms));
        obj.insert("active_seconds".into(), json!(r.active_seconds()));
        v
    }

    fn reply(&self, s: &SessionState, turn_index: usize) -> Value {
        let report = s.report_for(turn_index).map(ReportSummary::from);
        self.redacted(json!({"turn": s.history[turn_index], "report": report}))
    }

    /// Persists `event` and only then applies it to the in-memory record, so
    /// memory never runs ahead of the log.
    fn commit(&self, record: &mut SessionRecord, event: Event) -> Result<(), ApiError> {
        self.store.append(&record.session.id, &event)?;
        record.apply(&event).map_err(|m| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", m))
    }

    pub fn create(&self, req: CreateRequest) -> Result<Value, ApiError> {
        let ablation = match &req.ablation {
            Some(name) => Ablation::from_row_name(name)
                .ok_or_else(|| ApiError::invalid(format!("unknown ablation row {name:?}")))?,
            None => self.default_ablation,
        };
        let e = &self.engine;
        req.instruction.validate(&e.knowledge.taxonomy).map_err(|err| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_tags",
                redact_text(&err.to_string(), &e.knowledge.taxonomy),
            )
        })?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_ms = self.clock.now_ms();
        let fresh = SessionState::new(&id, req.instruction, ablation, &e.knowledge, &e.profiles, &e.generation)?;
        let mut opened = fresh.clone();
        let i = opened.open(&e.deps(self.clock.as_ref()))?;
        let at_ms = self.clock.now_ms();

        let mut record = SessionRecord { session: fresh.clone(), created_ms, updated_ms: created_ms, active_ms: 0 };
        self.store.append(&id, &Event::Created { session: Box::new(fresh), at_ms: created_ms })?;
        let turn = opened.history[i].clone();
        let report = opened.reports[0].clone();
        self.commit(&mut record, Event::CallerTurn { turn, report, at_ms })?;
        let view = self.view(&record);
        self.sessions.lock().expect("session map lock").insert(id, Arc::new(Mutex::new(record)));
        Ok(view)
    }

    pub fn turn(&self, id: &str, req: TurnRequest) -> Result<Value, ApiError> {
        let slot = self.slot(id)?;
        let mut record = slot.lock().expect("session lock");
        let mut s = record.session.clone();
        let i = s.respond(&req.text, &self.engine.deps(self.clock.as_ref()))?;
        let event = Event::Exchange {
            trainee: s.history[i - 1].clone(),
            caller: s.history[i].clone(),
            report: s.report_for(i).expect("reply has a report").clone(),
            at_ms: self.clock.now_ms(),
        };
        self.commit(&mut record, event)?;
        Ok(self.reply(&record.session, i))
    }

    pub fn feedback(&self, id: &str, req: FeedbackRequest) -> Result<Value, ApiError> {
        let slot = self.slot(id)?;
        let mut record = slot.lock().expect("session lock");
        let mut s = record.session.clone();
        let fb = s.record_feedback(req.turn_index, req.rating, req.comment, req.rejected, self.clock.as_ref())?;
        self.commit(&mut record, Event::Feedback { record: fb.clone() })?;

        // Only the latest, unanswered caller turn of an active session can be
        // replaced; older rejections are recorded for review only.
        let regenerable = req.rejected
            && s.status == callsim::validation::SessionStatus::Active
            && fb.turn_index + 1 == s.history.len();
        let regenerated = if regenerable {
            let i = s.regenerate(fb.turn_index, &self.engine.deps(self.clock.as_ref()))?;
            let event = Event::Regenerated {
                turn: s.history[i].clone(),
                report: s.report_for(i).expect("regenerated turn has a report").clone(),
                at_ms: self.clock.now_ms(),
            };
            self.commit(&mut record, event)?;
            Some(self.reply(&record.session, i))
        } else {
            None
        };
        Ok(json!({"feedback": self.redacted(json!(fb)), "regenerated": regenerated}))
    }

    pub fn get(&self, id: &str) -> Result<Value, ApiError> {
        let slot = self.slot(id)?;
        let record = slot.lock().expect("session lock");
        Ok(self.view(&record))
    }

    pub fn end(&self, id: &str) -> Result<Value, ApiError> {
        let slot = self.slot(id)?;
        let mut record = slot.lock().expect("session lock");
        let mut s = record.session.clone();
        s.end()?;
        self.commit(&mut record, Event::Ended { at_ms: self.clock.now_ms() })?;
        Ok(self.view(&record))
    }

    pub fn export(&self, q: &ExportQuery, headers: &HeaderMap) -> Result<Value, ApiError> {
        let instructor = match q.view.as_deref().unwrap_or("trainee") {
            "trainee" => false,
            "instructor" => true,
            other => return Err(ApiError::invalid(format!("unknown view {other:?}"))),
        };
        if instructor {
            self.authorize(headers)?;
        } else if q.include_sensitive {
            return Err(ApiError::invalid("include_sensitive requires the instructor view"));
        }
        let mut slots: Vec<(String, Slot)> = match &q.session {
            Some(id) => vec![(id.clone(), self.slot(id)?)],
            None => {
                self.sessions.lock().expect("session map lock").iter().map(|(k, v)| (k.clone(), v.clone())).collect()
            }
        };
        slots.sort_by(|a, b| a.0.cmp(&b.0));
        let sessions: Vec<Value> = slots
            .iter()
            .map(|(_, slot)| {
                let record = slot.lock().expect("session lock");
                if !instructor {
                    self.view(&record)
                } else if q.include_sensitive {
                    json!(*record)
                } else {
                    self.redacted(json!(*record))
                }
            })
            .collect();
        Ok(json!({"view": if instructor { "instructor" } else { "trainee" }, "sessions": sessions}))
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let Some(expected) = &self.instructor_token else {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "instructor export is not configured"));
        };
        let given = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong instructor token"));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub instruction: SimulationInstruction,
    #[serde(default)]
    pub ablation: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRequest {
    pub text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub turn_index: usize,
    pub rating: u8,
    #[serde(default)]
    pub comment: Option<String>,
    #[serde(default)]
    pub rejected: bool,
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportQuery {
    pub view: Option<String>,
    #[serde(default)]
    pub include_sensitive: bool,
    pub session: Option<String>,
}

type Shared = Arc<AppState>;

/// Runs a blocking engine call off the async workers.
async fn blocking<F>(state: Shared, f: F) -> Result<Json<Value>, ApiError>
where
    F: FnOnce(&AppState) -> Result<Value, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

async fn create(
    State(state): State<Shared>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let v = blocking(state, move |s| s.create(req)).await?;
    Ok((StatusCode::CREATED, v).into_response())
}

async fn turn(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<TurnRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(req) = body?;
    blocking(state, move |s| s.turn(&id, req)).await
}

async fn feedback(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(req) = body?;
    blocking(state, move |s| s.feedback(&id, req)).await
}

async fn show(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(state, move |s| s.get(&id)).await
}

async fn end(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(state, move |s| s.end(&id)).await
}

async fn export(
    State(state): State<Shared>,
    headers: HeaderMap,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query?;
    blocking(state, move |s| s.export(&q, &headers)).await
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/turns", post(turn))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/end", post(end))
        .route("/export", get(export))
        .fallback(fallback)
        .with_state(state)
}
