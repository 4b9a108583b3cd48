use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::catalog::FoodCatalog;
use super::classify::{classify_request, mealtime_in_text};
use super::dialog::{dialog_recommend, Recommendation};
use super::message::{AgentMessage, RequestClass};
use super::policy::{StepAction, Workflow, WorkflowPolicyTable};
use super::trace::{StepRecord, StepStatus, WorkflowTrace, PAYLOAD_VERSION};
use super::vision::{vision_analyze, VisionOutcome, DEFAULT_CONFIDENCE_THRESHOLD};
use crate::backends::{BackendSet, MealAnalysis};
use crate::clock::Clock;
use crate::domain::{DailyPlan, FoodItem, MealRecord, MealSource, MealTime, UserProfile};
use crate::dri::DriReference;
use crate::engine::{allocate_remaining, apply_meal, generate_daily_plan, AdjustmentPolicy, PlanHistory};
use crate::error::{Error, Result};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub confidence_threshold: f64,
    /// Extra attempts for a step whose backend call fails retriably.
    pub transport_retries: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            transport_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Clarification,
    Advisory,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub retriable: bool,
}

/// Stable error code and retriability for an engine error.
pub fn error_code(e: &Error) -> (&'static str, bool) {
    match e {
        Error::Contract(_) | Error::Parse { .. } | Error::SchemaMismatch(_) | Error::Json(_) => ("bad_request", false),
        Error::FixtureMiss(_) => ("unknown_image", false),
        Error::NotFound(_) => ("not_found", false),
        Error::Lookup(_) => ("lookup_failed", false),
        Error::Duplicate(_) => ("duplicate", false),
        Error::Transport { retriable, .. } => ("backend_unavailable", *retriable),
        Error::Window { .. } => ("insufficient_history", false),
        Error::Integrity(_) => ("integrity", false),
        Error::Undefined(_) => ("undefined", false),
        Error::Config(_) => ("configuration", false),
        Error::WriterLocked(_) | Error::Io { .. } => ("internal", true),
    }
}

impl ErrorBody {
    pub fn from_error(e: &Error) -> Self {
        let (code, retriable) = error_code(e);
        Self {
            code: code.to_string(),
            message: e.to_string(),
            retriable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub class: RequestClass,
    pub status: ResponseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meal: Option<MealRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<DailyPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meals: Option<Vec<MealRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Recommendation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
    /// Store sequence number of the last write made for this request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl AgentResponse {
    fn new(class: RequestClass) -> Self {
        Self {
            class,
            status: ResponseStatus::Ok,
            answer: None,
            meal: None,
            plan: None,
            meals: None,
            recommendation: None,
            clarification: None,
            advisory: None,
            seq: None,
            error: None,
        }
    }

    fn failed(class: RequestClass, e: Error) -> Self {
        let mut r = Self::new(class);
        r.status = ResponseStatus::Error;
        r.error = Some(ErrorBody::from_error(&e));
        r
    }
}

/// Everything the orchestrator needs, assembled by the caller.
#[derive(Debug, Clone)]
pub struct OrchestratorParts {
    pub store: Arc<Store>,
    pub backends: BackendSet,
    pub reference: Arc<DriReference>,
    pub catalog: Arc<FoodCatalog>,
    pub policy_table: Arc<WorkflowPolicyTable>,
    pub adjustment: AdjustmentPolicy,
    pub settings: AgentSettings,
    pub clock: Arc<dyn Clock>,
}

impl OrchestratorParts {
    /// Built-in reference tables, catalog and policy with default settings.
    pub fn standard(store: Arc<Store>, backends: BackendSet, clock: Arc<dyn Clock>) -> Result<Self> {
        Ok(Self {
            store,
            backends,
            reference: Arc::new(DriReference::standard().clone()),
            catalog: Arc::new(FoodCatalog::standard()?),
            policy_table: Arc::new(WorkflowPolicyTable::standard()?),
            adjustment: AdjustmentPolicy::default(),
            settings: AgentSettings::default(),
            clock,
        })
    }
}

/// The controller: classifies, plans the canonical workflow and runs it.
#[derive(Debug)]
pub struct Orchestrator {
    parts: OrchestratorParts,
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

/// Payloads passed between steps.
#[derive(Default)]
struct StepContext {
    analysis: Option<(MealAnalysis, MealSource)>,
    meal: Option<MealRecord>,
    plan: Option<DailyPlan>,
    meals: Option<Vec<MealRecord>>,
    profile: Option<UserProfile>,
    recommendation: Option<Recommendation>,
    clarification: Option<String>,
    seq: Option<u64>,
}

enum StepEffect {
    Continue(serde_json::Value),
    Stop(ResponseStatus, serde_json::Value),
}

fn payload(kind: &str, body: impl Serialize) -> Result<serde_json::Value> {
    Ok(serde_json::json!({ "version": PAYLOAD_VERSION, "type": kind, "body": serde_json::to_value(body)? }))
}

fn missing(step: StepAction, what: &str) -> Error {
    Error::integrity(format!("{step} needs a {what} payload from an earlier step"))
}

/// Default mealtime for a local time of day.
pub fn mealtime_for_hour(hour: u32) -> MealTime {
    match hour {
        4..=10 => MealTime::Breakfast,
        11..=15 => MealTime::Lunch,
        17..=21 => MealTime::Dinner,
        _ => MealTime::Snack,
    }
}

impl Orchestrator {
    pub fn new(parts: OrchestratorParts) -> Self {
        Self {
            parts,
            user_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn parts(&self) -> &OrchestratorParts {
        &self.parts
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.parts.store
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.parts.clock
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.parts.clock.now()
    }

    pub fn user_lock(&self, user: &str) -> Arc<Mutex<()>> {
        let mut m = self.user_locks.lock().unwrap_or_else(|p| p.into_inner());
        m.entry(user.to_string()).or_default().clone()
    }

    pub fn profile(&self, user: &str) -> Result<UserProfile> {
        self.parts.store.read_profile(user)
    }

    pub fn write_profile(&self, profile: &UserProfile) -> Result<u64> {
        let lock = self.user_lock(&profile.user_id);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        self.parts.store.write_profile(profile, &self.parts.reference)
    }

    /// The user's local calendar day at `at`.
    pub fn local_date(&self, profile: &UserProfile, at: DateTime<Utc>) -> Result<NaiveDate> {
        Ok(at.with_timezone(&profile.tz()?).date_naive())
    }

    /// Today's plan, created from history on the first touch of the day.
    /// Plans for other days are only read.
    pub fn ensure_plan(&self, profile: &UserProfile, date: NaiveDate) -> Result<(DailyPlan, Option<u64>)> {
        let store = &self.parts.store;
        match store.read_plan(&profile.user_id, date) {
            Ok(p) => Ok((p, None)),
            Err(Error::NotFound(_)) if date == self.local_date(profile, self.now())? => {
                let history = PlanHistory::from_plans(&store.plans_before(&profile.user_id, date)?)?;
                let plan = generate_daily_plan(profile, &self.parts.reference, &history, &self.parts.adjustment, date)?;
                let seq = store.update_plan_status(&plan)?;
                Ok((plan, Some(seq)))
            }
            Err(e) => Err(e),
        }
    }

    /// Classifies and runs a message end to end. Requests for one user are
    /// serialized.
    pub fn handle(&self, msg: &AgentMessage) -> (AgentResponse, WorkflowTrace) {
        let classified = msg
            .validate()
            .and_then(|_| classify_request(msg, self.parts.backends.controller.as_ref()));
        let class = match classified {
            Ok(c) => c,
            Err(e) => {
                let mut t = WorkflowTrace::new(RequestClass::GeneralQuestion, msg.received_at);
                t.stamp_out(self.now());
                return (AgentResponse::failed(RequestClass::GeneralQuestion, e), t);
            }
        };
        self.handle_class(class, msg)
    }

    /// Runs the canonical workflow for an already known class.
    pub fn handle_class(&self, class: RequestClass, msg: &AgentMessage) -> (AgentResponse, WorkflowTrace) {
        match self.parts.policy_table.plan_workflow(class) {
            Ok(wf) => self.execute_workflow(&wf, msg),
            Err(e) => {
                let mut t = WorkflowTrace::new(class, msg.received_at);
                t.stamp_out(self.now());
                (AgentResponse::failed(class, e), t)
            }
        }
    }

    /// Executes `wf` step by step, recording every worker invocation.
    ///
    /// A step whose backend fails retriably is attempted again up to the
    /// configured retry count. On failure the trace marks the failing step
    /// and the response carries a structured error.
    pub fn execute_workflow(&self, wf: &Workflow, msg: &AgentMessage) -> (AgentResponse, WorkflowTrace) {
        let lock = self.user_lock(&msg.user_id);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut trace = WorkflowTrace::new(wf.class, msg.received_at);
        let mut resp = AgentResponse::new(wf.class);

        if let Err(e) = msg.validate_for(wf.class) {
            trace.stamp_out(self.now());
            return (AgentResponse::failed(wf.class, e), trace);
        }

        if wf.steps.is_empty() {
            match self.direct_answer(wf.class, msg) {
                Ok(a) => resp.answer = Some(a),
                Err(e) => resp = AgentResponse::failed(wf.class, e),
            }
            trace.completed = resp.status == ResponseStatus::Ok;
            trace.stamp_out(self.now());
            return (resp, trace);
        }

        let mut ctx = StepContext::default();
        let mut stopped = false;
        for (index, &action) in wf.steps.iter().enumerate() {
            let started_at = self.now();
            let mut attempts = 0;
            let result = loop {
                attempts += 1;
                match self.run_step(action, msg, &mut ctx) {
                    Err(e) if e.is_retriable() && attempts <= self.parts.settings.transport_retries => continue,
                    other => break other,
                }
            };
            let finished_at = self.now();
            let mut rec = StepRecord {
                index,
                role: action.role(),
                action,
                started_at,
                finished_at,
                status: StepStatus::Ok,
                attempts,
                output: None,
                error: None,
            };
            match result {
                Ok(StepEffect::Continue(out)) => {
                    rec.output = Some(out);
                    trace.push(rec);
                }
                Ok(StepEffect::Stop(status, out)) => {
                    rec.output = Some(out);
                    trace.push(rec);
                    resp.status = status;
                    stopped = true;
                    break;
                }
                Err(e) => {
                    rec.status = StepStatus::Failed;
                    rec.error = Some(e.to_string());
                    trace.push(rec);
                    let failed = AgentResponse::failed(wf.class, e);
                    trace.stamp_out(self.now());
                    return (failed, trace);
                }
            }
        }

        if let Some(r) = &ctx.recommendation {
            if r.advisory.is_some() && r.items.is_empty() && r.mealtime.is_none() {
                resp.status = ResponseStatus::Advisory;
                resp.advisory = r.advisory.clone();
            }
        }
        trace.completed = !stopped;
        resp.meal = ctx.meal;
        resp.plan = ctx.plan;
        resp.meals = ctx.meals;
        resp.recommendation = ctx.recommendation;
        resp.clarification = ctx.clarification;
        resp.seq = ctx.seq;
        trace.stamp_out(self.now());
        (resp, trace)
    }

    fn load_profile(&self, user: &str, ctx: &mut StepContext) -> Result<UserProfile> {
        if let Some(p) = &ctx.profile {
            return Ok(p.clone());
        }
        self.parts.store.read_profile(user).map_err(|e| match e {
            Error::NotFound(_) => Error::NotFound(format!("unknown user {user}")),
            e => e,
        })
    }

    fn run_step(&self, action: StepAction, msg: &AgentMessage, ctx: &mut StepContext) -> Result<StepEffect> {
        let store = &self.parts.store;
        match action {
            StepAction::VisionAnalyze => {
                let bytes = msg
                    .image_ref
                    .as_deref()
                    .and_then(|r| store.get_blob(r).ok())
                    .map(Arc::<[u8]>::from);
                let outcome = vision_analyze(
                    msg,
                    self.parts.backends.vision.as_ref(),
                    self.parts.settings.confidence_threshold,
                    bytes,
                )?;
                let out = payload("vision_outcome", &outcome)?;
                match outcome {
                    VisionOutcome::Analysis { analysis, source } => {
                        ctx.analysis = Some((analysis, source));
                        Ok(StepEffect::Continue(out))
                    }
                    VisionOutcome::Clarification { question } => {
                        ctx.clarification = Some(question);
                        Ok(StepEffect::Stop(ResponseStatus::Clarification, out))
                    }
                }
            }
            StepAction::FileAppendMeal => {
                let (analysis, source) = ctx.analysis.clone().ok_or_else(|| missing(action, "meal analysis"))?;
                let profile = self.load_profile(&msg.user_id, ctx)?;
                let tz = profile.tz()?;
                let meal_id = msg
                    .meal_id
                    .clone()
                    .ok_or_else(|| Error::contract("meal logging needs a meal_id"))?;
                let local = msg.received_at.with_timezone(&tz);
                let timestamp = if local.date_naive() == msg.date {
                    msg.received_at
                } else {
                    // Back-dated entry: stamp local noon of the stated day.
                    tz.from_local_datetime(&msg.date.and_hms_opt(12, 0, 0).expect("valid time"))
                        .earliest()
                        .map(|t| t.with_timezone(&Utc))
                        .ok_or_else(|| Error::contract("meal date has no local noon"))?
                };
                let mealtime = msg
                    .mealtime
                    .or_else(|| msg.text().and_then(mealtime_in_text))
                    .unwrap_or_else(|| mealtime_for_hour(local.hour()));
                let record = MealRecord {
                    meal_id,
                    user_id: msg.user_id.clone(),
                    date: msg.date,
                    mealtime,
                    timestamp,
                    items: analysis
                        .items
                        .iter()
                        .map(|i| FoodItem { food: i.food.clone(), mass_g: i.mass_g })
                        .collect(),
                    nutrients: analysis.nutrients.clone(),
                    source,
                    confidence: Some(analysis.confidence),
                };
                let record = match store.append_meal(&record) {
                    Ok(seq) => {
                        ctx.seq = Some(seq);
                        record
                    }
                    Err(Error::Duplicate(m)) => {
                        // A meal logged by an earlier attempt that never reached the plan
                        // is resumed; one already in the plan is a true duplicate.
                        let in_plan = store
                            .read_plan(&msg.user_id, msg.date)
                            .map(|p| p.meals_logged.contains(&record.meal_id))
                            .unwrap_or(false);
                        let logged = store
                            .list_meals(&msg.user_id, Some(msg.date))?
                            .into_iter()
                            .find(|m| m.meal_id == record.meal_id);
                        match (in_plan, logged) {
                            (false, Some(prev)) => prev,
                            _ => return Err(Error::Duplicate(m)),
                        }
                    }
                    Err(e) => return Err(e),
                };
                let out = payload("meal_record", &record)?;
                ctx.profile = Some(profile);
                ctx.meal = Some(record);
                Ok(StepEffect::Continue(out))
            }
            StepAction::FileUpdatePlan => {
                let meal = ctx.meal.clone().ok_or_else(|| missing(action, "meal record"))?;
                let profile = self.load_profile(&msg.user_id, ctx)?;
                let (plan, _) = self.ensure_plan(&profile, meal.date)?;
                let next = apply_meal(&plan, &meal)?;
                ctx.seq = Some(store.update_plan_status(&next)?);
                let out = payload("daily_plan", &next)?;
                ctx.plan = Some(next);
                Ok(StepEffect::Continue(out))
            }
            StepAction::FileReadDaySummary => {
                let profile = self.load_profile(&msg.user_id, ctx)?;
                let (_, created) = self.ensure_plan(&profile, msg.date)?;
                if created.is_some() {
                    ctx.seq = created;
                }
                let summary = store.read_day_summary(&msg.user_id, msg.date)?;
                let out = payload("day_summary", &summary)?;
                ctx.plan = Some(summary.plan);
                ctx.meals = Some(summary.meals);
                Ok(StepEffect::Continue(out))
            }
            StepAction::FileReadProfile => {
                let profile = store.read_profile(&msg.user_id).map_err(|e| match e {
                    Error::NotFound(_) => Error::NotFound(format!("unknown user {}", msg.user_id)),
                    e => e,
                })?;
                let out = payload("user_profile", &profile)?;
                ctx.profile = Some(profile);
                Ok(StepEffect::Continue(out))
            }
            StepAction::DialogRecommend => {
                let plan = ctx.plan.clone().ok_or_else(|| missing(action, "daily plan"))?;
                let profile = ctx.profile.clone().ok_or_else(|| missing(action, "user profile"))?;
                let allocation = allocate_remaining(&plan, &profile.meal_habits)?;
                let rec = dialog_recommend(
                    &plan,
                    &allocation.budgets,
                    &profile,
                    &self.parts.catalog,
                    self.parts.backends.dialog.as_ref(),
                )?;
                let out = payload("recommendation", &rec)?;
                ctx.recommendation = Some(rec);
                Ok(StepEffect::Continue(out))
            }
        }
    }

    /// Controller-only answer for general and light nutrition questions.
    fn direct_answer(&self, class: RequestClass, msg: &AgentMessage) -> Result<String> {
        let text = msg.text().unwrap_or("");
        let mut facts = Vec::new();
        if class == RequestClass::LightNutritionQuestion {
            let lower = text.to_lowercase();
            let reference = &self.parts.reference;
            let row = self
                .parts
                .store
                .read_profile(&msg.user_id)
                .ok()
                .and_then(|p| reference.lookup_category(p.category(), &p.life_stage).ok().cloned());
            let schema = reference.schema();
            for (i, f) in schema.fields().iter().enumerate() {
                let spoken = f.name.replace('_', " ");
                if !lower.contains(&spoken) {
                    continue;
                }
                let fact = match row.as_ref().and_then(|r| r.get(i)) {
                    Some(v) => format!("Your daily reference intake for {spoken} is {v} {}.", f.unit),
                    None => format!("{spoken} is tracked in {} per day.", f.unit),
                };
                facts.push(fact);
            }
        }
        let prompt = serde_json::json!({ "task": "answer", "question": text, "facts": facts });
        let reply = self.parts.backends.controller.complete_text(&prompt.to_string())?;
        #[derive(Deserialize)]
        struct Answer {
            answer: String,
        }
        let a: Answer =
            serde_json::from_str(&reply).map_err(|e| Error::integrity(format!("answer reply: {e}")))?;
        Ok(a.answer)
    }
}
