use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use callsim::engine::{BackendConfig, DataPaths, Engine};
use callsim::generation::RemoteBackendConfig;
use callsim::validation::ValidationConfig;
use callsim::{Ablation, Clock, ManualClock};
use callsim_service::app::{router, AppState};
use callsim_service::record::SessionRecord;
use callsim_service::store::EventStore;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "instructor-secret";

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn data_paths() -> DataPaths {
    DataPaths {
        taxonomy: None,
        corpus: fixture("corpus.jsonl"),
        gazetteer: fixture("gazetteer.txt"),
        map: fixture("map.toml"),
        protocols: fixture("protocols.toml"),
        profiles: None,
        questions: None,
        classifier: None,
    }
}

fn engine(backend: &BackendConfig) -> Engine {
    let client = backend.build(&fixture("")).unwrap();
    Engine::load(&data_paths(), client, ValidationConfig::default()).unwrap()
}

struct Harness {
    state: Arc<AppState>,
    app: Router,
    clock: Arc<ManualClock>,
    dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        Self::with_backend(BackendConfig::RuleBased { fault_rate: 0.0 })
    }

    fn with_backend(backend: BackendConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(10_000));
        let state = Self::state(&backend, dir.path(), clock.clone());
        Self { app: router(state.clone()), state, clock, dir }
    }

    fn state(backend: &BackendConfig, dir: &std::path::Path, clock: Arc<ManualClock>) -> Arc<AppState> {
        let store = EventStore::open(dir).unwrap();
        let clock: Arc<dyn Clock> = clock;
        Arc::new(AppState::new(engine(backend), store, clock, Some(TOKEN.into()), Ablation::full()).unwrap())
    }

    /// A second service over the same event files, as after a restart.
    fn restarted(&self) -> Router {
        router(Self::state(&BackendConfig::RuleBased { fault_rate: 0.0 }, self.dir.path(), self.clock.clone()))
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        send(&self.app, method, uri, body, None).await
    }

    async fn create(&self) -> String {
        let (status, v) = self.call("POST", "/sessions", Some(json!({"instruction": crash()}))).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn crash() -> Value {
    json!({
        "is": {"incident_type": "crash report", "scenario_contexts": ["severe weather"],
               "special_requests": ["medical emergency"]},
        "ci": {"age": "adult", "emotion": "anxious", "vulnerable": ["unhoused", "non-native speaker"]},
        "seed": 7
    })
}

fn leaks(v: &Value) -> bool {
    let s = v.to_string().to_lowercase();
    ["unhoused", "non-native speaker", "mental health", "low-income housing area"].iter().any(|l| s.contains(l))
}

fn assert_error(status: StatusCode, v: &Value, want: StatusCode, code: &str) {
    assert_eq!(status, want, "{v}");
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{v}");
}

#[tokio::test]
async fn caller_opens_and_nothing_sensitive_is_returned() {
    let h = Harness::new();
    let (status, v) = h.call("POST", "/sessions", Some(json!({"instruction": crash()}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["turns"].as_array().unwrap().len(), 1);
    assert_eq!(v["turns"][0]["speaker"], "caller");
    assert_eq!(v["status"], "active");
    assert!(v["tags"].as_array().unwrap().contains(&json!("crash report")));
    assert!(!leaks(&v), "{v}");

    let id = v["id"].as_str().unwrap();
    let (status, reply) =
        h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "What is your address?"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["turn"]["index"], 2);
    assert_eq!(reply["report"]["status"], "validated");
    let text = reply["turn"]["text"].as_str().unwrap();
    let addr = text.trim_start_matches("It's ").trim_end_matches('.');
    assert!(h.state.engine.knowledge.gazetteer.contains(addr), "{text}");
    assert!(!leaks(&reply));
}

#[tokio::test]
async fn same_instruction_gives_distinct_ids_and_same_opening() {
    let h = Harness::new();
    let (_, a) = h.call("POST", "/sessions", Some(json!({"instruction": crash()}))).await;
    let (_, b) = h.call("POST", "/sessions", Some(json!({"instruction": crash()}))).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["turns"][0]["text"], b["turns"][0]["text"]);
}

#[tokio::test]
async fn invalid_requests() {
    let h = Harness::new();
    let mut bad = crash();
    bad["is"]["incident_type"] = json!("meteor strike");
    let (status, v) = h.call("POST", "/sessions", Some(json!({"instruction": bad}))).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_tags");
    assert!(h.state.store.ids().unwrap().is_empty());

    let (status, v) = h.call("POST", "/sessions", Some(json!({"instruction": crash(), "ablation": "no-x"}))).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_request");
    let (status, v) = h.call("POST", "/sessions", Some(json!({"nope": 1}))).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_request");
    let (status, v) = h.call("GET", "/sessions/missing", None).await;
    assert_error(status, &v, StatusCode::NOT_FOUND, "not_found");
    let (status, v) = h.call("GET", "/nowhere", None).await;
    assert_error(status, &v, StatusCode::NOT_FOUND, "not_found");

    let id = h.create().await;
    let (status, v) = h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "  "}))).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_request");
    let (status, v) =
        h.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({"turn_index": 0, "rating": 6}))).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_request");
    assert!(v["message"].as_str().unwrap().contains('6'));
}

#[tokio::test]
async fn ended_sessions_refuse_turns() {
    let h = Harness::new();
    let id = h.create().await;
    let (status, v) = h.call("POST", &format!("/sessions/{id}/end"), None).await;
    assert_eq!((status, v["status"].as_str()), (StatusCode::OK, Some("completed")));
    let (status, v) = h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "Hello?"}))).await;
    assert_error(status, &v, StatusCode::CONFLICT, "session_state");
    let (status, v) = h.call("POST", &format!("/sessions/{id}/end"), None).await;
    assert_error(status, &v, StatusCode::CONFLICT, "session_state");
}

#[tokio::test]
async fn feedback_is_persisted_and_rejection_regenerates() {
    let h = Harness::new();
    let id = h.create().await;
    let (status, v) = h
        .call(
            "POST",
            &format!("/sessions/{id}/feedback"),
            Some(json!({"turn_index": 0, "rating": 4, "comment": "clear"})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["feedback"]["rating"], 4);
    assert!(v["regenerated"].is_null());

    let (_, reply) = h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "Is anyone hurt?"}))).await;
    let (status, v) = h
        .call(
            "POST",
            &format!("/sessions/{id}/feedback"),
            Some(json!({"turn_index": 2, "rating": 1, "rejected": true})),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let regen = &v["regenerated"];
    assert_eq!(regen["turn"]["index"], 2);
    assert_eq!(regen["report"]["turn_index"], 2);

    let (_, s) = h.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["turns"].as_array().unwrap().len(), 3);
    assert_eq!(s["turns"][2], regen["turn"]);
    assert_eq!(s["superseded"][0], reply["turn"]);
    assert_eq!(s["feedback"].as_array().unwrap().len(), 2);
    assert_eq!(s["rejected"], json!([]));

    let (_, export) = send(&h.app, "GET", &format!("/export?session={id}"), None, None).await;
    assert_eq!(export["sessions"][0]["feedback"][0]["comment"], "clear");
}

#[tokio::test]
async fn export_views() {
    let h = Harness::new();
    let id = h.create().await;
    h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "Where are you?"}))).await;

    let (status, trainee) = send(&h.app, "GET", "/export", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trainee["view"], "trainee");
    assert_eq!(trainee["sessions"][0]["reports"].as_array().unwrap().len(), 2);
    assert!(!leaks(&trainee));

    let (status, v) = send(&h.app, "GET", "/export?view=instructor", None, None).await;
    assert_error(status, &v, StatusCode::UNAUTHORIZED, "unauthorized");
    let (status, v) = send(&h.app, "GET", "/export?view=instructor", None, Some("wrong")).await;
    assert_error(status, &v, StatusCode::UNAUTHORIZED, "unauthorized");
    let (status, v) = send(&h.app, "GET", "/export?include_sensitive=true", None, None).await;
    assert_error(status, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_request");

    let (status, redacted) = send(&h.app, "GET", "/export?view=instructor", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(redacted["sessions"][0]["session"]["reports"].as_array().unwrap().len(), 2);
    assert!(redacted["sessions"][0]["session"]["reports"][0]["attempts"].is_array());
    assert!(!leaks(&redacted));

    let (_, full) = send(&h.app, "GET", "/export?view=instructor&include_sensitive=true", None, Some(TOKEN)).await;
    assert!(leaks(&full));
    assert_eq!(
        full["sessions"][0]["session"]["instruction"]["ci"]["vulnerable"],
        json!(["non-native speaker", "unhoused"])
    );
}

#[tokio::test]
async fn event_log_replays_to_the_live_record() {
    let h = Harness::new();
    let id = h.create().await;
    for q in ["What is the address of the emergency?", "Is anyone hurt?"] {
        h.clock.advance(1_500);
        h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": q}))).await;
    }
    h.call("POST", &format!("/sessions/{id}/feedback"), Some(json!({"turn_index": 4, "rating": 2, "rejected": true})))
        .await;
    h.call("POST", &format!("/sessions/{id}/end"), None).await;

    let (_, live) = send(&h.app, "GET", "/export?view=instructor&include_sensitive=true", None, Some(TOKEN)).await;
    let replayed: SessionRecord = h.state.store.load(&id).unwrap();
    let live: SessionRecord = serde_json::from_value(live["sessions"][0].clone()).unwrap();
    assert_eq!(serde_json::to_string(&replayed).unwrap(), serde_json::to_string(&live).unwrap());
    assert_eq!(replayed.session.regenerations, 1);

    let again = h.restarted();
    let (_, before) = h.call("GET", &format!("/sessions/{id}"), None).await;
    let (_, after) = send(&again, "GET", &format!("/sessions/{id}"), None, None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn duration_freezes_at_end() {
    let h = Harness::new();
    let id = h.create().await;
    h.clock.advance(2_000);
    h.call("POST", &format!("/sessions/{id}/turns"), Some(json!({"text": "Is anyone hurt?"}))).await;
    h.clock.advance(3_000);
    let (_, v) = h.call("POST", &format!("/sessions/{id}/end"), None).await;
    assert_eq!(v["active_seconds"], 5.0);
    h.clock.advance(60_000);
    let (_, v) = h.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["active_seconds"], 5.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_turns_on_one_session_are_serialised() {
    let h = Harness::new();
    let id = h.create().await;
    let other = h.create().await;
    let mut tasks = Vec::new();
    for i in 0..6 {
        let app = h.app.clone();
        let target = if i % 3 == 2 { other.clone() } else { id.clone() };
        tasks.push(tokio::spawn(async move {
            send(
                &app,
                "POST",
                &format!("/sessions/{target}/turns"),
                Some(json!({"text": format!("question {i}")})),
                None,
            )
            .await
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    let (_, v) = h.call("GET", &format!("/sessions/{id}"), None).await;
    let turns = v["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 9);
    for (i, t) in turns.iter().enumerate() {
        assert_eq!(t["index"], i);
        assert_eq!(t["speaker"], if i % 2 == 0 { "caller" } else { "calltaker" });
    }
    assert_eq!(h.state.store.events(&id).unwrap().len(), 2 + 4);
}

#[tokio::test]
async fn credentials_stay_out_of_logs_and_errors() {
    let var = "CALLSIM_API_TEST_SECRET";
    std::env::set_var(var, "sk-live-0123456789");
    let backend = BackendConfig::Remote(RemoteBackendConfig {
        endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
        model: "m".into(),
        api_key_env: Some(var.into()),
        timeout_ms: 2_000,
        history_cap: None,
    });
    let h = Harness::with_backend(backend.clone());
    let (status, v) = h.call("POST", "/sessions", Some(json!({"instruction": crash()}))).await;
    assert_error(status, &v, StatusCode::BAD_GATEWAY, "backend_unavailable");
    assert!(!v.to_string().contains("sk-live"));
    assert!(h.state.store.ids().unwrap().is_empty());
    assert!(!toml::to_string(&backend).unwrap().contains("sk-live"));
}
