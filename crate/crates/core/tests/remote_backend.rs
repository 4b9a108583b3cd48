//! Contract tests for the remote model adapter against a local stub server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine as _;
use chrono::Utc;
use serde_json::{json, Value};

use mealloop::agents::{AgentMessage, RequestClass, ResponseStatus};
use mealloop::backends::{BackendConfig, BackendDescriptor, BackendRole, ModelBackend, PromptContext, RemoteBackend, RemoteSpec};
use mealloop::config::Config;
use mealloop::Error;

const TOKEN: &str = "stub-secret";

/// What the stub does with the next request.
#[derive(Clone)]
enum Mode {
    Normal,
    Status(u16),
    Garbage,
    BadConfidence,
}

#[derive(Clone)]
struct Stub {
    mode: Arc<Mutex<Mode>>,
    seen: Arc<Mutex<Vec<Value>>>,
    hits: Arc<AtomicUsize>,
}

fn analysis(confidence: f64) -> Value {
    json!({
        "items": [{"food": "stub stew", "mass_g": 350.0}],
        "nutrients": {"energy": 512.0, "protein": 31.5, "carbohydrate": 48.0, "fat": 19.0, "fiber": 6.0, "sodium": 880.0},
        "confidence": confidence,
        "used_reference_object": false
    })
}

async fn infer(State(stub): State<Stub>, headers: HeaderMap, Json(req): Json<Value>) -> Response {
    stub.hits.fetch_add(1, Ordering::SeqCst);
    stub.seen.lock().unwrap().push(req.clone());
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok());
    if auth != Some(&format!("Bearer {TOKEN}")) {
        return (StatusCode::UNAUTHORIZED, "bad token").into_response();
    }
    let mode = stub.mode.lock().unwrap().clone();
    match mode {
        Mode::Status(code) => (StatusCode::from_u16(code).unwrap(), "stub failure").into_response(),
        Mode::Garbage => (StatusCode::OK, "{\"unexpected\": true}").into_response(),
        Mode::BadConfidence => Json(analysis(1.5)).into_response(),
        Mode::Normal => match req["task"].as_str() {
            Some("analyze_image") | Some("analyze_text") => Json(analysis(0.9)).into_response(),
            Some("complete") => {
                let prompt: Value = serde_json::from_str(req["prompt"].as_str().unwrap_or("")).unwrap_or(Value::Null);
                let text = match prompt["task"].as_str() {
                    Some("rank") => json!({ "ranking": [] }).to_string(),
                    _ => "ok".to_string(),
                };
                Json(json!({ "text": text })).into_response()
            }
            _ => (StatusCode::BAD_REQUEST, "unknown task").into_response(),
        },
    }
}

struct Server {
    url: String,
    stub: Stub,
    _rt: tokio::runtime::Runtime,
}

fn server() -> Server {
    let stub = Stub {
        mode: Arc::new(Mutex::new(Mode::Normal)),
        seen: Arc::new(Mutex::new(Vec::new())),
        hits: Arc::new(AtomicUsize::new(0)),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = Router::new().route("/infer", post(infer)).with_state(stub.clone());
    rt.spawn(async move { axum::serve(listener, app).await });
    Server {
        url: format!("http://{addr}/infer"),
        stub,
        _rt: rt,
    }
}

fn descriptor(role: BackendRole, endpoint: &str, env: &str) -> BackendDescriptor {
    BackendDescriptor {
        role,
        model: Some("stub".into()),
        config: BackendConfig::Remote(RemoteSpec {
            endpoint: endpoint.into(),
            credentials_env: env.into(),
            timeout_ms: 5_000,
            max_in_flight: 2,
        }),
    }
}

/// Each test uses its own variable so parallel tests do not race.
fn remote(role: BackendRole, endpoint: &str, env: &str) -> RemoteBackend {
    std::env::set_var(env, TOKEN);
    RemoteBackend::new(descriptor(role, endpoint, env)).unwrap()
}

#[test]
fn image_analysis_round_trip() {
    let s = server();
    let b = remote(BackendRole::Vision, &s.url, "MEALLOOP_TEST_KEY_IMAGE");
    let ctx = PromptContext {
        text: Some("stew with a fork".into()),
        scale_object: Some("fork".into()),
        image_bytes: Some(Arc::from(&b"\x89PNG fake"[..])),
    };
    let a = b.analyze_image("upload-1", &ctx).unwrap();
    assert_eq!(a.confidence, 0.9);
    assert_eq!(a.items[0].food, "stub stew");
    assert_eq!(a.nutrients.get_named("energy"), Some(512.0));
    assert_eq!(a.nutrients.get_named("vitamin_c"), None);

    let seen = s.stub.seen.lock().unwrap();
    let req = &seen[0];
    assert_eq!(req["role"], "vision");
    assert_eq!(req["task"], "analyze_image");
    assert_eq!(req["image_ref"], "upload-1");
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(req["image_base64"].as_str().unwrap())
        .unwrap();
    assert_eq!(bytes, b"\x89PNG fake");
    assert!(req["prompt"].as_str().unwrap().contains("fork"));
}

#[test]
fn text_analysis_and_completion() {
    let s = server();
    let v = remote(BackendRole::Vision, &s.url, "MEALLOOP_TEST_KEY_TEXT");
    let a = v.analyze_text("a bowl of stew", &PromptContext::default()).unwrap();
    assert_eq!(a.nutrients.get_named("protein"), Some(31.5));
    let d = remote(BackendRole::Dialog, &s.url, "MEALLOOP_TEST_KEY_TEXT");
    assert_eq!(d.complete_text("{\"task\":\"hello\"}").unwrap(), "ok");
    let seen = s.stub.seen.lock().unwrap();
    assert_eq!(seen[0]["task"], "analyze_text");
    assert!(seen[0].get("image_ref").is_none());
    assert_eq!(seen[1]["role"], "dialog");
    assert_eq!(seen[1]["task"], "complete");
}

#[test]
fn role_misuse_is_rejected_before_any_request() {
    let s = server();
    let d = remote(BackendRole::Dialog, &s.url, "MEALLOOP_TEST_KEY_ROLE");
    assert!(matches!(d.analyze_image("x", &PromptContext::default()), Err(Error::Contract(_))));
    let v = remote(BackendRole::Vision, &s.url, "MEALLOOP_TEST_KEY_ROLE");
    assert!(matches!(v.complete_text("{}"), Err(Error::Contract(_))));
    assert!(matches!(v.analyze_text("  ", &PromptContext::default()), Err(Error::Contract(_))));
    assert_eq!(s.stub.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn failures_map_to_typed_errors() {
    let s = server();
    let v = remote(BackendRole::Vision, &s.url, "MEALLOOP_TEST_KEY_FAIL");
    let ctx = PromptContext::default();
    let set = |m| *s.stub.mode.lock().unwrap() = m;

    set(Mode::Status(503));
    match v.analyze_image("x", &ctx) {
        Err(Error::Transport { retriable, .. }) => assert!(retriable),
        other => panic!("{other:?}"),
    }
    set(Mode::Status(429));
    assert!(matches!(v.analyze_image("x", &ctx), Err(Error::Transport { retriable: true, .. })));
    set(Mode::Status(400));
    assert!(matches!(v.analyze_image("x", &ctx), Err(Error::Transport { retriable: false, .. })));
    set(Mode::Garbage);
    assert!(matches!(v.analyze_image("x", &ctx), Err(Error::Integrity(_))));
    set(Mode::BadConfidence);
    assert!(matches!(v.analyze_image("x", &ctx), Err(Error::Integrity(_))));
}

#[test]
fn wrong_credentials_are_not_retriable() {
    let s = server();
    std::env::set_var("MEALLOOP_TEST_KEY_WRONG", "not-the-token");
    let v = RemoteBackend::new(descriptor(BackendRole::Vision, &s.url, "MEALLOOP_TEST_KEY_WRONG")).unwrap();
    assert!(matches!(
        v.analyze_text("stew", &PromptContext::default()),
        Err(Error::Transport { retriable: false, .. })
    ));
}

#[test]
fn unreachable_endpoint_is_retriable() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let v = remote(BackendRole::Vision, &format!("http://127.0.0.1:{port}/infer"), "MEALLOOP_TEST_KEY_DOWN");
    assert!(matches!(
        v.analyze_text("stew", &PromptContext::default()),
        Err(Error::Transport { retriable: true, .. })
    ));
}

#[test]
fn configured_remote_vision_logs_a_meal() {
    let s = server();
    std::env::set_var("MEALLOOP_TEST_KEY_CONFIG", TOKEN);
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        r#"
[store]
root = "store"

[[backends]]
role = "vision"
mode = "remote"
endpoint = "{}"
credentials_env = "MEALLOOP_TEST_KEY_CONFIG"
"#,
        s.url
    );
    let path = dir.path().join("mealloop.toml");
    std::fs::write(&path, toml).unwrap();
    let orch = Config::load(&path).unwrap().build_orchestrator().unwrap();
    assert_eq!(orch.parts().backends.vision.descriptor().mode(), "remote");
    assert_eq!(orch.parts().backends.dialog.descriptor().mode(), "mock");

    let profile = mealloop::eval::suite::eval_profile("r1");
    orch.write_profile(&profile).unwrap();
    let now = Utc::now();
    let msg = AgentMessage {
        user_id: "r1".into(),
        date: orch.local_date(&profile, now).unwrap(),
        mealtime: None,
        meal_id: Some("m1".into()),
        text: Some("lunch".into()),
        image_ref: Some("upload-7".into()),
        received_at: now,
    };
    let (resp, trace) = orch.handle_class(RequestClass::MealLog, &msg);
    assert_eq!(resp.status, ResponseStatus::Ok, "{:?}", resp.error);
    let meal = resp.meal.unwrap();
    assert_eq!(meal.nutrients.get_named("energy"), Some(512.0));
    let plan = resp.plan.unwrap();
    let want = plan.targets.get_named("energy").unwrap() - 512.0;
    assert_eq!(plan.remaining.get_named("energy"), Some(want));
    assert_eq!(trace.executed_count, 3);
    assert!(s.stub.seen.lock().unwrap().iter().any(|r| r["image_ref"] == "upload-7"));
    // Fields the backend did not report stay missing.
    assert!(meal.nutrients.get_named("vitamin_c").is_none());
}
