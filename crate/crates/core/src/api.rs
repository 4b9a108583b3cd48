//! HTTP boundary.
//!
//! Every response is an envelope carrying the request id, the receipt and
//! reply timestamps, and either a result or a structured error. Mutating
//! requests that send `X-Request-Id` are applied at most once: a retry
//! with the same id gets the stored reply back.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{
    AgentMessage, AgentResponse, ErrorBody, Orchestrator, RequestClass, ResponseStatus, WorkflowTrace,
};
use crate::domain::{DailyPlan, MealRecord, MealTime, Unit, UserProfile};
use crate::error::{Error, Result};

pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const REPLAY_HEADER: &str = "idempotent-replay";
const MAX_BODY_BYTES: usize = 20 * 1024 * 1024;

/// Response document for every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope {
    pub request_id: String,
    pub tau_in: DateTime<Utc>,
    pub tau_out: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<WorkflowTrace>,
}

/// `meta` part of a meal upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MealMeta {
    pub meal_id: String,
    #[serde(default)]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub mealtime: Option<MealTime>,
    #[serde(default)]
    pub text: Option<String>,
    /// Reference to an image already known to the vision backend. An
    /// uploaded `image` part takes precedence.
    #[serde(default)]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreRow {
    pub name: String,
    pub unit: Unit,
    pub target: Option<f64>,
    pub consumed: Option<f64>,
    /// Signed; negative once the target is exceeded.
    pub remaining: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub plan: DailyPlan,
    pub core: Vec<CoreRow>,
    pub meals: Vec<MealRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealAck {
    pub meal: MealRecord,
    pub remaining_core: BTreeMap<String, f64>,
    pub plan: DailyPlan,
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendationRequest {
    #[serde(default)]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub user_id: String,
    pub text: String,
    #[serde(default)]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub meal_id: Option<String>,
    #[serde(default)]
    pub mealtime: Option<MealTime>,
    #[serde(default)]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PlanQuery {
    pub date: Option<NaiveDate>,
}

/// HTTP status for an error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "bad_request" | "unknown_image" => StatusCode::BAD_REQUEST,
        "unauthorized" => StatusCode::UNAUTHORIZED,
        "not_found" => StatusCode::NOT_FOUND,
        "duplicate" | "no_meals_remaining" => StatusCode::CONFLICT,
        "needs_clarification" => StatusCode::UNPROCESSABLE_ENTITY,
        "backend_unavailable" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct Reply {
    result: Option<Value>,
    error: Option<ErrorBody>,
    trace: Option<WorkflowTrace>,
}

impl Reply {
    fn ok(result: impl Serialize) -> Result<Self> {
        Ok(Self {
            result: Some(serde_json::to_value(result)?),
            error: None,
            trace: None,
        })
    }

    fn err(e: &Error) -> Self {
        Self {
            result: None,
            error: Some(ErrorBody::from_error(e)),
            trace: None,
        }
    }

    fn status(&self) -> StatusCode {
        self.error.as_ref().map_or(StatusCode::OK, |e| status_for(&e.code))
    }
}

#[derive(Clone)]
struct Cached {
    status: StatusCode,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Cached>>>;

/// Bounded map from request key to stored reply, oldest evicted first.
struct IdempotencyCache {
    cap: usize,
    inner: Mutex<(HashMap<String, Slot>, VecDeque<String>)>,
}

impl IdempotencyCache {
    fn slot(&self, key: &str) -> Slot {
        let mut g = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let (map, order) = &mut *g;
        if let Some(s) = map.get(key) {
            return s.clone();
        }
        while map.len() >= self.cap.max(1) {
            match order.pop_front() {
                Some(old) => {
                    map.remove(&old);
                }
                None => break,
            }
        }
        let s = Slot::default();
        map.insert(key.to_string(), s.clone());
        order.push_back(key.to_string());
        s
    }
}

pub struct AppState {
    orch: Arc<Orchestrator>,
    token: Option<String>,
    cache: IdempotencyCache,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(orch: Arc<Orchestrator>, token: Option<String>, cache_cap: usize) -> Self {
        Self {
            orch,
            token,
            cache: IdempotencyCache {
                cap: cache_cap,
                inner: Mutex::new((HashMap::new(), VecDeque::new())),
            },
            counter: AtomicU64::new(0),
        }
    }

    pub fn orchestrator(&self) -> &Arc<Orchestrator> {
        &self.orch
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/users/{id}/meals", post(post_meal))
        .route("/users/{id}/plan", get(get_plan))
        .route("/users/{id}/recommendation", post(post_recommendation))
        .route("/users/{id}/profile", get(get_profile).put(put_profile))
        .route("/chat", post(post_chat))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Per-request bookkeeping shared by all handlers.
struct Ctx {
    state: Arc<AppState>,
    request_id: String,
    explicit_id: bool,
    tau_in: DateTime<Utc>,
}

impl Ctx {
    fn new(state: Arc<AppState>, headers: &HeaderMap) -> Self {
        let tau_in = state.orch.now();
        let given = headers
            .get(REQUEST_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::trim)
            .filter(|v| !v.is_empty() && v.len() <= 128)
            .map(str::to_string);
        let explicit_id = given.is_some();
        let request_id = given.unwrap_or_else(|| {
            let n = state.counter.fetch_add(1, Ordering::Relaxed);
            format!("req-{}-{n}", tau_in.timestamp_micros())
        });
        Self {
            state,
            request_id,
            explicit_id,
            tau_in,
        }
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(token) = &self.state.token else { return true };
        headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token)
    }

    fn render(&self, reply: Reply) -> Cached {
        let status = reply.status();
        let floor = reply.trace.as_ref().and_then(|t| t.tau_out).unwrap_or(self.tau_in);
        let env = ApiEnvelope {
            request_id: self.request_id.clone(),
            tau_in: self.tau_in,
            tau_out: self.state.orch.now().max(floor),
            result: reply.result,
            error: reply.error,
            trace: reply.trace,
        };
        let body = serde_json::to_vec(&env).expect("envelope serializes");
        Cached {
            status,
            body: Bytes::from(body),
        }
    }

    fn respond(&self, c: Cached, replay: bool) -> Response {
        let mut r = (c.status, [(axum::http::header::CONTENT_TYPE, "application/json")], c.body).into_response();
        if let Ok(v) = HeaderValue::from_str(&self.request_id) {
            r.headers_mut().insert(REQUEST_ID_HEADER, v);
        }
        if replay {
            r.headers_mut().insert(REPLAY_HEADER, HeaderValue::from_static("true"));
        }
        r
    }

    fn unauthorized(&self) -> Response {
        let e = ErrorBody {
            code: "unauthorized".into(),
            message: "missing or wrong API token".into(),
            retriable: false,
        };
        self.respond(
            self.render(Reply {
                result: None,
                error: Some(e),
                trace: None,
            }),
            false,
        )
    }

    /// Runs blocking work off the async executor.
    async fn run<F>(&self, work: F) -> Cached
    where
        F: FnOnce(&Orchestrator, DateTime<Utc>, &str) -> Reply + Send + 'static,
    {
        let orch = self.state.orch.clone();
        let tau_in = self.tau_in;
        let id = self.request_id.clone();
        let reply = tokio::task::spawn_blocking(move || work(&orch, tau_in, &id))
            .await
            .unwrap_or_else(|e| Reply::err(&Error::integrity(format!("handler panicked: {e}"))));
        self.render(reply)
    }

    /// Like `run`, applied at most once per explicit request id. Replies
    /// with retriable errors are not stored so a retry runs again.
    async fn run_once<F>(&self, scope: &str, work: F) -> Response
    where
        F: FnOnce(&Orchestrator, DateTime<Utc>, &str) -> Reply + Send + 'static,
    {
        if !self.explicit_id {
            let c = self.run(work).await;
            return self.respond(c, false);
        }
        let slot = self.state.cache.slot(&format!("{scope} {}", self.request_id));
        let mut guard = slot.lock().await;
        if let Some(c) = guard.clone() {
            return self.respond(c, true);
        }
        let c = self.run(work).await;
        if !c.status.is_server_error() {
            *guard = Some(c.clone());
        }
        self.respond(c, false)
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::contract(format!("request body: {e}")))
}

/// Maps an orchestrator outcome to a reply, shaping the result with `shape`.
fn from_agent(
    resp: AgentResponse,
    trace: WorkflowTrace,
    shape: impl FnOnce(&AgentResponse) -> Result<Value>,
) -> Reply {
    let mut reply = match resp.status {
        ResponseStatus::Error => Reply {
            result: None,
            error: resp.error.clone(),
            trace: None,
        },
        ResponseStatus::Clarification => Reply {
            result: Some(serde_json::json!({ "clarification": resp.clarification })),
            error: Some(ErrorBody {
                code: "needs_clarification".into(),
                message: resp.clarification.clone().unwrap_or_default(),
                retriable: false,
            }),
            trace: None,
        },
        ResponseStatus::Advisory => Reply {
            result: serde_json::to_value(&resp.recommendation).ok(),
            error: Some(ErrorBody {
                code: "no_meals_remaining".into(),
                message: resp.advisory.clone().unwrap_or_default(),
                retriable: false,
            }),
            trace: None,
        },
        ResponseStatus::Ok => match shape(&resp) {
            Ok(v) => Reply {
                result: Some(v),
                error: None,
                trace: None,
            },
            Err(e) => Reply::err(&e),
        },
    };
    reply.trace = Some(trace);
    reply
}

fn user_date(orch: &Orchestrator, user: &str, date: Option<NaiveDate>, at: DateTime<Utc>) -> Result<(UserProfile, NaiveDate)> {
    let profile = orch.profile(user).map_err(|e| match e {
        Error::NotFound(_) => Error::NotFound(format!("unknown user {user}")),
        e => e,
    })?;
    let date = match date {
        Some(d) => d,
        None => orch.local_date(&profile, at)?,
    };
    Ok((profile, date))
}

fn core_rows(plan: &DailyPlan) -> Vec<CoreRow> {
    let schema = plan.targets.schema();
    schema
        .core_indices()
        .into_iter()
        .map(|i| {
            let f = schema.field(i);
            CoreRow {
                name: f.name.clone(),
                unit: f.unit,
                target: plan.targets.get(i),
                consumed: plan.consumed.get(i),
                remaining: plan.remaining.get(i),
            }
        })
        .collect()
}

async fn post_meal(
    State(state): State<Arc<AppState>>,
    Path(user): Path<String>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    let mut meta: Option<Vec<u8>> = None;
    let mut image: Option<Vec<u8>> = None;
    loop {
        match multipart.next_field().await {
            Ok(Some(field)) => {
                let name = field.name().unwrap_or_default().to_string();
                let bytes = match field.bytes().await {
                    Ok(b) => b.to_vec(),
                    Err(e) => return ctx.respond(ctx.render(Reply::err(&Error::contract(format!("multipart: {e}")))), false),
                };
                match name.as_str() {
                    "meta" => meta = Some(bytes),
                    "image" => image = Some(bytes),
                    other => {
                        let e = Error::contract(format!("unexpected multipart field {other:?}"));
                        return ctx.respond(ctx.render(Reply::err(&e)), false);
                    }
                }
            }
            Ok(None) => break,
            Err(e) => return ctx.respond(ctx.render(Reply::err(&Error::contract(format!("multipart: {e}")))), false),
        }
    }
    let scope = format!("POST /users/{user}/meals");
    ctx.run_once(&scope, move |orch, tau_in, _| {
        let go = || -> Result<Reply> {
            let meta: MealMeta = parse_json(meta.as_deref().ok_or_else(|| Error::contract("missing meta part"))?)?;
            let (_, date) = user_date(orch, &user, meta.date, tau_in)?;
            let image_ref = match &image {
                Some(bytes) if !bytes.is_empty() => Some(orch.store().put_blob(bytes)?),
                _ => meta.image_ref.clone(),
            };
            let msg = AgentMessage {
                user_id: user.clone(),
                date,
                mealtime: meta.mealtime,
                meal_id: Some(meta.meal_id.clone()),
                text: meta.text.clone(),
                image_ref,
                received_at: tau_in,
            };
            let (resp, trace) = orch.handle_class(RequestClass::MealLog, &msg);
            Ok(from_agent(resp, trace, |r| {
                let plan = r.plan.clone().ok_or_else(|| Error::integrity("meal log returned no plan"))?;
                let meal = r.meal.clone().ok_or_else(|| Error::integrity("meal log returned no record"))?;
                let remaining_core = core_rows(&plan)
                    .into_iter()
                    .filter_map(|row| row.remaining.map(|v| (row.name, v)))
                    .collect();
                Ok(serde_json::to_value(MealAck {
                    meal,
                    remaining_core,
                    plan,
                    seq: r.seq,
                })?)
            }))
        };
        go().unwrap_or_else(|e| Reply::err(&e))
    })
    .await
}

async fn get_plan(
    State(state): State<Arc<AppState>>,
    Path(user): Path<String>,
    Query(q): Query<PlanQuery>,
    headers: HeaderMap,
) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    let c = ctx
        .run(move |orch, tau_in, _| {
            let go = || -> Result<Reply> {
                let (_, date) = user_date(orch, &user, q.date, tau_in)?;
                let msg = AgentMessage {
                    user_id: user.clone(),
                    date,
                    mealtime: None,
                    meal_id: None,
                    text: None,
                    image_ref: None,
                    received_at: tau_in,
                };
                let (resp, trace) = orch.handle_class(RequestClass::PlanStatusQuery, &msg);
                Ok(from_agent(resp, trace, |r| {
                    let plan = r.plan.clone().ok_or_else(|| Error::integrity("status query returned no plan"))?;
                    Ok(serde_json::to_value(PlanView {
                        core: core_rows(&plan),
                        meals: r.meals.clone().unwrap_or_default(),
                        plan,
                    })?)
                }))
            };
            go().unwrap_or_else(|e| Reply::err(&e))
        })
        .await;
    ctx.respond(c, false)
}

async fn post_recommendation(
    State(state): State<Arc<AppState>>,
    Path(user): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    let scope = format!("POST /users/{user}/recommendation");
    ctx.run_once(&scope, move |orch, tau_in, _| {
        let go = || -> Result<Reply> {
            let req: RecommendationRequest = if body.iter().all(u8::is_ascii_whitespace) {
                RecommendationRequest::default()
            } else {
                parse_json(&body)?
            };
            let (_, date) = user_date(orch, &user, req.date, tau_in)?;
            let msg = AgentMessage {
                user_id: user.clone(),
                date,
                mealtime: None,
                meal_id: None,
                text: req.text,
                image_ref: None,
                received_at: tau_in,
            };
            let (resp, trace) = orch.handle_class(RequestClass::NextMealRecommendation, &msg);
            Ok(from_agent(resp, trace, |r| {
                Ok(serde_json::json!({ "recommendation": r.recommendation, "plan": r.plan }))
            }))
        };
        go().unwrap_or_else(|e| Reply::err(&e))
    })
    .await
}

async fn post_chat(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    ctx.run_once("POST /chat", move |orch, tau_in, request_id| {
        let go = || -> Result<Reply> {
            let req: ChatRequest = parse_json(&body)?;
            if req.text.trim().is_empty() {
                return Err(Error::contract("chat text is empty"));
            }
            let (_, date) = user_date(orch, &req.user_id, req.date, tau_in)?;
            let msg = AgentMessage {
                user_id: req.user_id.clone(),
                date,
                mealtime: req.mealtime,
                meal_id: Some(req.meal_id.clone().unwrap_or_else(|| request_id.to_string())),
                text: Some(req.text.clone()),
                image_ref: req.image_ref.clone(),
                received_at: tau_in,
            };
            let (resp, trace) = orch.handle(&msg);
            Ok(from_agent(resp, trace, |r| Ok(serde_json::to_value(r)?)))
        };
        go().unwrap_or_else(|e| Reply::err(&e))
    })
    .await
}

async fn get_profile(State(state): State<Arc<AppState>>, Path(user): Path<String>, headers: HeaderMap) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    let c = ctx
        .run(move |orch, tau_in, _| {
            user_date(orch, &user, None, tau_in)
                .and_then(|(p, _)| Reply::ok(p))
                .unwrap_or_else(|e| Reply::err(&e))
        })
        .await;
    ctx.respond(c, false)
}

async fn put_profile(
    State(state): State<Arc<AppState>>,
    Path(user): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let ctx = Ctx::new(state, &headers);
    if !ctx.authorized(&headers) {
        return ctx.unauthorized();
    }
    let scope = format!("PUT /users/{user}/profile");
    ctx.run_once(&scope, move |orch, _, _| {
        let go = || -> Result<Reply> {
            let profile: UserProfile = parse_json(&body)?;
            if profile.user_id != user {
                return Err(Error::contract(format!(
                    "profile user_id {:?} does not match path {user:?}",
                    profile.user_id
                )));
            }
            let seq = orch.write_profile(&profile)?;
            Reply::ok(serde_json::json!({ "profile": profile, "seq": seq }))
        };
        go().unwrap_or_else(|e| Reply::err(&e))
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_map_to_documented_statuses() {
        assert_eq!(status_for("bad_request"), StatusCode::BAD_REQUEST);
        assert_eq!(status_for("not_found"), StatusCode::NOT_FOUND);
        assert_eq!(status_for("duplicate"), StatusCode::CONFLICT);
        assert_eq!(status_for("no_meals_remaining"), StatusCode::CONFLICT);
        assert_eq!(status_for("backend_unavailable"), StatusCode::BAD_GATEWAY);
        assert_eq!(status_for("integrity"), StatusCode::INTERNAL_SERVER_ERROR);
    }

    #[test]
    fn cache_evicts_oldest() {
        let c = IdempotencyCache {
            cap: 2,
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        };
        let a = c.slot("a");
        c.slot("b");
        assert!(Arc::ptr_eq(&a, &c.slot("a")));
        c.slot("c");
        assert!(!Arc::ptr_eq(&a, &c.slot("a")));
    }
}
