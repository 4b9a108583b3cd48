use std::ffi::{CStr, CString};
use std::ptr;

use mealloop_ffi::*;

const PROFILE: &str = r#"{"user_id":"u1","sex":"female","life_stage":"19-30 y","timezone":"UTC",
"meal_habits":[{"mealtime":"breakfast","weight":0.25},{"mealtime":"lunch","weight":0.4},{"mealtime":"dinner","weight":0.35}]}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = mealloop_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(p: *mut std::ffi::c_char) -> serde_json::Value {
    assert!(!p.is_null());
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    mealloop_string_free(p);
    v
}

struct Engine(*mut MealloopEngine, #[allow(dead_code)] tempfile::TempDir);

impl Engine {
    fn open() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut e = ptr::null_mut();
        let root = c(dir.path().to_str().unwrap());
        assert_eq!(unsafe { mealloop_engine_open_mock(root.as_ptr(), &mut e) }, MealloopStatus::Ok);
        assert!(!e.is_null());
        Engine(e, dir)
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        unsafe { mealloop_engine_free(self.0) };
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(mealloop_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn step_for_residual_follows_the_rule() {
    let p = mealloop_policy_default();
    let mut out = f64::NAN;
    // alpha*E = 30 exceeds c*RDA = 15.
    assert_eq!(unsafe { mealloop_step_for_residual(&p, 100.0, 100.0, &mut out) }, MealloopStatus::Ok);
    assert!((out - 15.0).abs() < 1e-12);
    assert_eq!(unsafe { mealloop_step_for_residual(&p, -10.0, 100.0, &mut out) }, MealloopStatus::Ok);
    assert!((out + 3.0).abs() < 1e-12);
    assert_eq!(unsafe { mealloop_step_for_residual(&p, 1e-9, 100.0, &mut out) }, MealloopStatus::Ok);
    assert_eq!(out, 0.0);

    let bad = MealloopPolicy { direction: 3, ..p };
    assert_ne!(unsafe { mealloop_step_for_residual(&bad, 1.0, 1.0, &mut out) }, MealloopStatus::Ok);
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { mealloop_step_for_residual(ptr::null(), 1.0, 1.0, &mut out) },
        MealloopStatus::NullArgument
    );
}

#[test]
fn null_and_utf8_arguments_are_rejected() {
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { mealloop_engine_open_mock(ptr::null(), &mut e) }, MealloopStatus::NullArgument);
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { mealloop_engine_open_mock(bad.as_ptr().cast(), &mut e) },
        MealloopStatus::InvalidUtf8
    );
    assert!(e.is_null());
    unsafe {
        mealloop_engine_free(ptr::null_mut());
        mealloop_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let mut e = ptr::null_mut();
    let path = c("/nonexistent/mealloop.toml");
    let s = unsafe { mealloop_engine_open(path.as_ptr(), &mut e) };
    assert_ne!(s, MealloopStatus::Ok);
    assert!(e.is_null());
    assert!(last_error().contains("mealloop.toml"));
}

#[test]
fn profile_log_and_plan_round_trip() {
    let eng = Engine::open();
    let mut seq = 0u64;
    let profile = c(PROFILE);
    assert_eq!(unsafe { mealloop_engine_put_profile(eng.0, profile.as_ptr(), &mut seq) }, MealloopStatus::Ok);
    assert!(seq >= 1);

    let mut out = ptr::null_mut();
    let msg = c(r#"{"user_id":"u1","mealtime":"breakfast","meal_id":"b1","image_ref":"snap_001.jpg"}"#);
    assert_eq!(unsafe { mealloop_engine_handle(eng.0, msg.as_ptr(), &mut out) }, MealloopStatus::Ok);
    let doc = unsafe { take(out) };
    assert_eq!(doc["response"]["status"], "ok");
    assert_eq!(doc["response"]["class"], "meal_log");
    assert!(doc["trace"]["steps"].as_array().unwrap().len() >= 3);

    // Same meal id again.
    assert_eq!(unsafe { mealloop_engine_handle(eng.0, msg.as_ptr(), &mut out) }, MealloopStatus::Duplicate);
    let doc = unsafe { take(out) };
    assert_eq!(doc["response"]["error"]["code"], "duplicate");
    assert!(!last_error().is_empty());

    let user = c("u1");
    assert_eq!(unsafe { mealloop_engine_plan(eng.0, user.as_ptr(), ptr::null(), &mut out) }, MealloopStatus::Ok);
    let plan = unsafe { take(out) };
    assert_eq!(plan["user_id"], "u1");
    assert_eq!(plan["meals_logged"], serde_json::json!(["b1"]));
    assert!(!plan["meals_remaining"].as_array().unwrap().iter().any(|m| m == "breakfast"));
}

#[test]
fn unknown_user_and_bad_json() {
    let eng = Engine::open();
    let mut out = ptr::null_mut();
    let user = c("ghost");
    assert_eq!(unsafe { mealloop_engine_plan(eng.0, user.as_ptr(), ptr::null(), &mut out) }, MealloopStatus::NotFound);
    assert!(out.is_null());
    let junk = c("{not json");
    assert_eq!(unsafe { mealloop_engine_put_profile(eng.0, junk.as_ptr(), ptr::null_mut()) }, MealloopStatus::BadRequest);
    let profile = c(PROFILE);
    assert_eq!(unsafe { mealloop_engine_put_profile(eng.0, profile.as_ptr(), ptr::null_mut()) }, MealloopStatus::Ok);
    let date = c("2020-13-01");
    assert_eq!(unsafe { mealloop_engine_plan(eng.0, c("u1").as_ptr(), date.as_ptr(), &mut out) }, MealloopStatus::BadRequest);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mealloop.h")).unwrap();
    for name in [
        "mealloop_version",
        "mealloop_last_error",
        "mealloop_string_free",
        "mealloop_policy_default",
        "mealloop_step_for_residual",
        "mealloop_engine_open",
        "mealloop_engine_open_mock",
        "mealloop_engine_free",
        "mealloop_engine_put_profile",
        "mealloop_engine_handle",
        "mealloop_engine_plan",
        "typedef struct MealloopEngine MealloopEngine",
        "MEALLOOP_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"mealloop.h\"\nint main(void) { MealloopPolicy p = mealloop_policy_default(); return p.direction == 1 ? 0 : 1; }\n").unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
