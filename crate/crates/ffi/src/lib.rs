//! C ABI over the mealloop engine.
//!
//! Every call returns a [`MealloopStatus`]. On failure a message is kept
//! per thread and read with [`mealloop_last_error`]. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`mealloop_string_free`]. Engines are opaque and released with
//! [`mealloop_engine_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use chrono::{NaiveDate, Utc};
use mealloop::agents::{error_code, AgentMessage, Orchestrator, OrchestratorParts, ResponseStatus};
use mealloop::backends::{BackendSet, MockSpec};
use mealloop::clock::SystemClock;
use mealloop::config::Config;
use mealloop::domain::{MealTime, UserProfile};
use mealloop::engine::{step_for_residual, AdjustmentPolicy};
use mealloop::store::Store;
use mealloop::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MealloopStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    BadRequest = 3,
    NotFound = 4,
    Duplicate = 5,
    BackendUnavailable = 6,
    NeedsClarification = 7,
    NoMealsRemaining = 8,
    Integrity = 9,
    Config = 10,
    Internal = 11,
    Panic = 12,
}

/// Adjustment policy parameters, mirrored for C callers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MealloopPolicy {
    /// +1 raises targets after a shortfall, -1 lowers them.
    pub direction: i8,
    pub window_days: u32,
    pub gain: f64,
    pub clamp_frac: f64,
    pub epsilon: f64,
}

impl From<MealloopPolicy> for AdjustmentPolicy {
    fn from(p: MealloopPolicy) -> Self {
        AdjustmentPolicy {
            direction: p.direction,
            window_days: p.window_days as usize,
            gain: p.gain,
            clamp_frac: p.clamp_frac,
            epsilon: p.epsilon,
        }
    }
}

/// Opaque engine handle.
pub struct MealloopEngine {
    orch: Orchestrator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_for_code(code: &str) -> MealloopStatus {
    match code {
        "bad_request" | "unknown_image" => MealloopStatus::BadRequest,
        "not_found" => MealloopStatus::NotFound,
        "duplicate" => MealloopStatus::Duplicate,
        "backend_unavailable" => MealloopStatus::BackendUnavailable,
        "integrity" => MealloopStatus::Integrity,
        "configuration" => MealloopStatus::Config,
        _ => MealloopStatus::Internal,
    }
}

fn fail(e: &Error) -> MealloopStatus {
    set_error(e.to_string());
    status_for_code(error_code(e).0)
}

/// Runs `f`, converting panics and errors to status codes.
fn guard(f: impl FnOnce() -> Result<MealloopStatus, MealloopStatus>) -> MealloopStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside mealloop");
            MealloopStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, MealloopStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(MealloopStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        MealloopStatus::InvalidUtf8
    })
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), MealloopStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("output contains a nul byte");
        MealloopStatus::Internal
    })?;
    *out = c.into_raw();
    Ok(())
}

fn engine_ref<'a>(e: *const MealloopEngine) -> Result<&'a MealloopEngine, MealloopStatus> {
    if e.is_null() {
        set_error("null engine");
        return Err(MealloopStatus::NullArgument);
    }
    // SAFETY: non-null handles come from mealloop_engine_open*.
    Ok(unsafe { &*e })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mealloop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn mealloop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mealloop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default adjustment policy.
#[no_mangle]
pub extern "C" fn mealloop_policy_default() -> MealloopPolicy {
    let p = AdjustmentPolicy::default();
    MealloopPolicy {
        direction: p.direction,
        window_days: p.window_days as u32,
        gain: p.gain,
        clamp_frac: p.clamp_frac,
        epsilon: p.epsilon,
    }
}

/// One day's target change for a residual (target minus achieved) and a
/// reference intake.
///
/// # Safety
/// `policy` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mealloop_step_for_residual(
    policy: *const MealloopPolicy,
    residual: f64,
    rda: f64,
    out: *mut f64,
) -> MealloopStatus {
    guard(|| {
        if policy.is_null() || out.is_null() {
            set_error("null argument");
            return Err(MealloopStatus::NullArgument);
        }
        let p: AdjustmentPolicy = (*policy).into();
        p.validate().map_err(|e| fail(&e))?;
        *out = step_for_residual(residual, rda, &p);
        Ok(MealloopStatus::Ok)
    })
}

/// Opens an engine from a TOML config file.
///
/// # Safety
/// `config_path` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_open(config_path: *const c_char, out: *mut *mut MealloopEngine) -> MealloopStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return Err(MealloopStatus::NullArgument);
        }
        let path = read_str(config_path)?;
        let orch = Config::load(Path::new(path))
            .and_then(|c| c.build_orchestrator())
            .map_err(|e| fail(&e))?;
        *out = Box::into_raw(Box::new(MealloopEngine { orch }));
        Ok(MealloopStatus::Ok)
    })
}

/// Opens an engine over `store_root` with deterministic mock backends.
///
/// # Safety
/// `store_root` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_open_mock(store_root: *const c_char, out: *mut *mut MealloopEngine) -> MealloopStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return Err(MealloopStatus::NullArgument);
        }
        let root = read_str(store_root)?;
        let build = || -> mealloop::Result<Orchestrator> {
            let store = Arc::new(Store::open(root)?);
            let parts = OrchestratorParts::standard(store, BackendSet::mock(MockSpec::default())?, Arc::new(SystemClock))?;
            Ok(Orchestrator::new(parts))
        };
        let orch = build().map_err(|e| fail(&e))?;
        *out = Box::into_raw(Box::new(MealloopEngine { orch }));
        Ok(MealloopStatus::Ok)
    })
}

/// Closes an engine and releases its store lock. Null is ignored.
///
/// # Safety
/// `engine` must come from an open call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_free(engine: *mut MealloopEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Writes a user profile given as JSON.
///
/// # Safety
/// Pointers must be valid; `out_seq` may be null.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_put_profile(
    engine: *const MealloopEngine,
    profile_json: *const c_char,
    out_seq: *mut u64,
) -> MealloopStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let text = read_str(profile_json)?;
        let profile: UserProfile = serde_json::from_str(text).map_err(|err| fail(&Error::Json(err)))?;
        let seq = e.orch.write_profile(&profile).map_err(|err| fail(&err))?;
        if !out_seq.is_null() {
            *out_seq = seq;
        }
        Ok(MealloopStatus::Ok)
    })
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FfiMessage {
    user_id: String,
    #[serde(default)]
    date: Option<NaiveDate>,
    #[serde(default)]
    mealtime: Option<MealTime>,
    #[serde(default)]
    meal_id: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    image_ref: Option<String>,
}

/// Handles one chat-style message. `out_json` receives
/// `{"response": ..., "trace": ...}` whenever the message was processed,
/// including when the returned status reports a failure.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_handle(
    engine: *const MealloopEngine,
    message_json: *const c_char,
    out_json: *mut *mut c_char,
) -> MealloopStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        if out_json.is_null() {
            set_error("null out pointer");
            return Err(MealloopStatus::NullArgument);
        }
        let m: FfiMessage = serde_json::from_str(read_str(message_json)?).map_err(|err| fail(&Error::Json(err)))?;
        let now = Utc::now();
        let date = match m.date {
            Some(d) => d,
            None => {
                let p = e.orch.profile(&m.user_id).map_err(|err| fail(&err))?;
                e.orch.local_date(&p, now).map_err(|err| fail(&err))?
            }
        };
        let msg = AgentMessage {
            user_id: m.user_id,
            date,
            mealtime: m.mealtime,
            meal_id: m.meal_id,
            text: m.text,
            image_ref: m.image_ref,
            received_at: now,
        };
        let (resp, trace) = e.orch.handle(&msg);
        let status = match resp.status {
            ResponseStatus::Ok => MealloopStatus::Ok,
            ResponseStatus::Clarification => MealloopStatus::NeedsClarification,
            ResponseStatus::Advisory => MealloopStatus::NoMealsRemaining,
            ResponseStatus::Error => {
                let body = resp.error.as_ref().expect("error response carries a body");
                set_error(body.message.clone());
                status_for_code(&body.code)
            }
        };
        let doc = serde_json::json!({ "response": resp, "trace": trace });
        write_string(out_json, doc.to_string())?;
        Ok(status)
    })
}

/// Reads the plan for `date` (`YYYY-MM-DD`, or null for today), creating
/// today's plan on first use.
///
/// # Safety
/// Pointers must be valid; `date` may be null.
#[no_mangle]
pub unsafe extern "C" fn mealloop_engine_plan(
    engine: *const MealloopEngine,
    user_id: *const c_char,
    date: *const c_char,
    out_json: *mut *mut c_char,
) -> MealloopStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        if out_json.is_null() {
            set_error("null out pointer");
            return Err(MealloopStatus::NullArgument);
        }
        let user = read_str(user_id)?;
        let profile = e.orch.profile(user).map_err(|err| fail(&err))?;
        let date = if date.is_null() {
            e.orch.local_date(&profile, Utc::now()).map_err(|err| fail(&err))?
        } else {
            read_str(date)?
                .parse::<NaiveDate>()
                .map_err(|err| fail(&Error::contract(format!("date: {err}"))))?
        };
        let (plan, _) = e.orch.ensure_plan(&profile, date).map_err(|err| fail(&err))?;
        write_string(out_json, serde_json::to_string(&plan).map_err(|err| fail(&Error::Json(err)))?)?;
        Ok(MealloopStatus::Ok)
    })
}
