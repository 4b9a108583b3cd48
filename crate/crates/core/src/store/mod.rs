//! File-backed system state with a single writer per root.
//!
//! Layout (see `docs/storage.md` for the byte-level format):
//!
//! ```text
//! <root>/.writer.lock
//! <root>/blobs/<sha256 hex>
//! <root>/users/<user_id>/profile.json
//! <root>/users/<user_id>/meals.jsonl
//! <root>/users/<user_id>/plans/<YYYY-MM-DD>.json
//! <root>/users/<user_id>/plans/<YYYY-MM-DD>.audit/<seq>.json
//! ```

pub mod fsutil;

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{DailyPlan, MealRecord, UserProfile};
use crate::dri::DriReference;
use crate::error::{Error, Result};
use fsutil::{atomic_write, atomic_write_with_fault, sweep_temp_files, FaultPoint};

pub const DEFAULT_AUDIT_DEPTH: usize = 30;
const LOCK_FILE: &str = ".writer.lock";

#[derive(Debug, Serialize, Deserialize)]
struct Versioned<T> {
    seq: u64,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Serialize, Deserialize)]
struct MealLine {
    meal: MealRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanDoc {
    plan: DailyPlan,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileDoc {
    profile: UserProfile,
}

/// Plan and meal list captured at the same sequence point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub plan: DailyPlan,
    pub meals: Vec<MealRecord>,
    pub seq: u64,
}

struct WriterState {
    seq: u64,
    fault: Option<FaultPoint>,
}

/// The sole writer of a store root.
///
/// Mutations are serialized through one internal lock and each gets the next
/// sequence number. Reads go straight to disk; every document is replaced by
/// rename, so a read observes one complete version.
pub struct Store {
    root: PathBuf,
    audit_depth: usize,
    state: Mutex<WriterState>,
    _lock: File,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

fn check_user_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::contract(format!("user id {id:?} must match [A-Za-z0-9_-]{{1,64}}")))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Complete lines of a meal log; an unterminated tail is ignored.
fn read_meal_lines(path: &Path) -> Result<Vec<Versioned<MealLine>>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

impl Store {
    /// Opens (creating if needed) a store root for writing. A second writer on
    /// the same root, from this or another process, gets `WriterLocked`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with(root, DEFAULT_AUDIT_DEPTH)
    }

    pub fn open_with(root: impl Into<PathBuf>, audit_depth: usize) -> Result<Self> {
        let root = root.into();
        if audit_depth == 0 {
            return Err(Error::config("audit depth must be at least 1"));
        }
        fs::create_dir_all(root.join("users")).map_err(|e| Error::io(&root, e))?;
        fs::create_dir_all(root.join("blobs")).map_err(|e| Error::io(&root, e))?;
        let lock_path = root.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(Error::WriterLocked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(Error::io(&lock_path, e)),
        }
        sweep_temp_files(&root)?;
        let seq = recover(&root)?;
        Ok(Self {
            root,
            audit_depth,
            state: Mutex::new(WriterState { seq, fault: None }),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Highest sequence number written so far.
    pub fn seq(&self) -> u64 {
        self.lock_state().seq
    }

    /// Makes the next mutating write fail at `point`, leaving the files as a
    /// crash at that moment would. Test hook.
    #[doc(hidden)]
    pub fn inject_fault_once(&self, point: FaultPoint) {
        self.lock_state().fault = Some(point);
    }

    fn lock_state(&self) -> std::sync::MutexGuard<'_, WriterState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn user_dir(&self, user: &str) -> PathBuf {
        self.root.join("users").join(user)
    }

    pub fn meal_log_path(&self, user: &str) -> PathBuf {
        self.user_dir(user).join("meals.jsonl")
    }

    pub fn plan_path(&self, user: &str, date: NaiveDate) -> PathBuf {
        self.user_dir(user).join("plans").join(format!("{date}.json"))
    }

    pub fn audit_dir(&self, user: &str, date: NaiveDate) -> PathBuf {
        self.user_dir(user).join("plans").join(format!("{date}.audit"))
    }

    pub fn profile_path(&self, user: &str) -> PathBuf {
        self.user_dir(user).join("profile.json")
    }

    // ---- meals -------------------------------------------------------------

    /// Appends one line to the user's meal log and returns its sequence number.
    pub fn append_meal(&self, record: &MealRecord) -> Result<u64> {
        check_user_id(&record.user_id)?;
        let tz = match self.read_profile(&record.user_id) {
            Ok(p) => p.tz()?,
            Err(Error::NotFound(_)) => chrono_tz::UTC,
            Err(e) => return Err(e),
        };
        record.validate(tz)?;
        let mut st = self.lock_state();
        let path = self.meal_log_path(&record.user_id);
        if read_meal_lines(&path)?
            .iter()
            .any(|l| l.body.meal.date == record.date && l.body.meal.meal_id == record.meal_id)
        {
            return Err(Error::Duplicate(format!(
                "meal {} already logged for {} on {}",
                record.meal_id, record.user_id, record.date
            )));
        }
        let seq = st.seq + 1;
        let mut line = serde_json::to_vec(&Versioned {
            seq,
            body: MealLine { meal: record.clone() },
        })?;
        line.push(b'\n');
        fs::create_dir_all(self.user_dir(&record.user_id)).map_err(|e| Error::io(&path, e))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if st.fault.take() == Some(FaultPoint::MidWrite) {
            f.write_all(&line[..line.len() / 2]).map_err(|e| Error::io(&path, e))?;
            return Err(Error::io(&path, std::io::Error::other("injected fault mid-append")));
        }
        f.write_all(&line).map_err(|e| Error::io(&path, e))?;
        f.sync_all().map_err(|e| Error::io(&path, e))?;
        st.seq = seq;
        Ok(seq)
    }

    /// All meals of a user in append order, optionally restricted to one day.
    pub fn list_meals(&self, user: &str, date: Option<NaiveDate>) -> Result<Vec<MealRecord>> {
        check_user_id(user)?;
        Ok(read_meal_lines(&self.meal_log_path(user))?
            .into_iter()
            .map(|l| l.body.meal)
            .filter(|m| date.is_none_or(|d| m.date == d))
            .collect())
    }

    // ---- plans -------------------------------------------------------------

    /// Replaces the day's plan document, keeping the most recent versions in
    /// the audit directory.
    pub fn update_plan_status(&self, plan: &DailyPlan) -> Result<u64> {
        check_user_id(&plan.user_id)?;
        plan.check_identity()?;
        let mut st = self.lock_state();
        let seq = st.seq + 1;
        let bytes = serde_json::to_vec_pretty(&Versioned {
            seq,
            body: PlanDoc { plan: plan.clone() },
        })?;
        let audit = self.audit_dir(&plan.user_id, plan.date);
        atomic_write_with_fault(&self.plan_path(&plan.user_id, plan.date), &bytes, st.fault.take())?;
        atomic_write(&audit.join(format!("{seq:012}.json")), &bytes)?;
        st.seq = seq;
        prune_audit(&audit, self.audit_depth)?;
        Ok(seq)
    }

    pub fn read_plan(&self, user: &str, date: NaiveDate) -> Result<DailyPlan> {
        check_user_id(user)?;
        self.read_plan_versioned(user, date).map(|(p, _)| p)
    }

    fn read_plan_versioned(&self, user: &str, date: NaiveDate) -> Result<(DailyPlan, u64)> {
        let doc: Option<Versioned<PlanDoc>> = read_json(&self.plan_path(user, date))?;
        doc.map(|d| (d.body.plan, d.seq))
            .ok_or_else(|| Error::NotFound(format!("no plan for {user} on {date}")))
    }

    /// Sequence numbers of retained plan versions, oldest first.
    pub fn plan_audit(&self, user: &str, date: NaiveDate) -> Result<Vec<u64>> {
        check_user_id(user)?;
        audit_entries(&self.audit_dir(user, date))
    }

    /// Dates with a stored plan, ascending.
    pub fn plan_dates(&self, user: &str) -> Result<Vec<NaiveDate>> {
        check_user_id(user)?;
        let dir = self.user_dir(user).join("plans");
        let mut dates = BTreeSet::new();
        let Ok(rd) = fs::read_dir(&dir) else {
            return Ok(Vec::new());
        };
        for e in rd {
            let e = e.map_err(|e| Error::io(&dir, e))?;
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some(d) = name.strip_suffix(".json").and_then(|s| s.parse().ok()) {
                dates.insert(d);
            }
        }
        Ok(dates.into_iter().collect())
    }

    /// Stored plans dated strictly before `date`, oldest first.
    pub fn plans_before(&self, user: &str, date: NaiveDate) -> Result<Vec<DailyPlan>> {
        self.plan_dates(user)?
            .into_iter()
            .filter(|d| *d < date)
            .map(|d| self.read_plan(user, d))
            .collect()
    }

    /// The day's plan and exactly the meals folded into it.
    ///
    /// Meals are appended before the plan that includes them is written, so
    /// filtering the log by the plan's own meal list yields a pair taken at
    /// the plan's sequence point even while writes continue.
    pub fn read_day_summary(&self, user: &str, date: NaiveDate) -> Result<DaySummary> {
        check_user_id(user)?;
        let (plan, seq) = self.read_plan_versioned(user, date)?;
        let logged: BTreeSet<&str> = plan.meals_logged.iter().map(String::as_str).collect();
        let mut meals: Vec<MealRecord> = self
            .list_meals(user, Some(date))?
            .into_iter()
            .filter(|m| logged.contains(m.meal_id.as_str()))
            .collect();
        if meals.len() != logged.len() {
            return Err(Error::integrity(format!(
                "plan {user} {date} lists {} meals, log has {}",
                logged.len(),
                meals.len()
            )));
        }
        let order: Vec<&String> = plan.meals_logged.iter().collect();
        meals.sort_by_key(|m| order.iter().position(|id| **id == m.meal_id));
        Ok(DaySummary { plan, meals, seq })
    }

    // ---- profiles ----------------------------------------------------------

    pub fn write_profile(&self, profile: &UserProfile, reference: &DriReference) -> Result<u64> {
        check_user_id(&profile.user_id)?;
        crate::domain::validate_profile(profile, reference).into_result()?;
        let mut st = self.lock_state();
        let seq = st.seq + 1;
        let bytes = serde_json::to_vec_pretty(&Versioned {
            seq,
            body: ProfileDoc { profile: profile.clone() },
        })?;
        atomic_write_with_fault(&self.profile_path(&profile.user_id), &bytes, st.fault.take())?;
        st.seq = seq;
        Ok(seq)
    }

    /// Always reads from disk, so hand edits apply to the next request.
    pub fn read_profile(&self, user: &str) -> Result<UserProfile> {
        check_user_id(user)?;
        let doc: Option<Versioned<ProfileDoc>> = read_json(&self.profile_path(user))?;
        doc.map(|d| d.body.profile)
            .ok_or_else(|| Error::NotFound(format!("no profile for {user}")))
    }

    pub fn users(&self) -> Result<Vec<String>> {
        let dir = self.root.join("users");
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let e = e.map_err(|e| Error::io(&dir, e))?;
            if e.path().is_dir() {
                out.push(e.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    // ---- blobs -------------------------------------------------------------

    /// Stores content-addressed bytes, returning the lowercase hex digest.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.root.join("blobs").join(&hash);
        if !path.exists() {
            let _st = self.lock_state();
            atomic_write(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>> {
        if hash.len() != 64 || !hash.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::contract(format!("{hash:?} is not a sha256 digest")));
        }
        let path = self.root.join("blobs").join(hash);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("blob {hash}")),
            _ => Error::io(&path, e),
        })
    }
}

fn audit_entries(dir: &Path) -> Result<Vec<u64>> {
    let Ok(rd) = fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut seqs = Vec::new();
    for e in rd {
        let e = e.map_err(|e| Error::io(dir, e))?;
        if let Some(s) = e
            .file_name()
            .to_string_lossy()
            .strip_suffix(".json")
            .and_then(|s| s.parse::<u64>().ok())
        {
            seqs.push(s);
        }
    }
    seqs.sort_unstable();
    Ok(seqs)
}

fn prune_audit(dir: &Path, depth: usize) -> Result<()> {
    let seqs = audit_entries(dir)?;
    if seqs.len() > depth {
        for s in &seqs[..seqs.len() - depth] {
            let p = dir.join(format!("{s:012}.json"));
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// Truncates torn meal-log tails and returns the highest committed sequence
/// number found anywhere under `root`.
fn recover(root: &Path) -> Result<u64> {
    let mut max = 0u64;
    let users = root.join("users");
    for u in fs::read_dir(&users).map_err(|e| Error::io(&users, e))? {
        let u = u.map_err(|e| Error::io(&users, e))?.path();
        if !u.is_dir() {
            continue;
        }
        let log = u.join("meals.jsonl");
        if log.exists() {
            truncate_torn_tail(&log)?;
            for l in read_meal_lines(&log)? {
                max = max.max(l.seq);
            }
        }
        if let Some(d) = read_json::<Versioned<serde_json::Value>>(&u.join("profile.json"))? {
            max = max.max(d.seq);
        }
        let plans = u.join("plans");
        if let Ok(rd) = fs::read_dir(&plans) {
            for e in rd {
                let p = e.map_err(|e| Error::io(&plans, e))?.path();
                if p.is_dir() {
                    if let Some(s) = audit_entries(&p)?.last() {
                        max = max.max(*s);
                    }
                } else if p.extension().is_some_and(|x| x == "json") {
                    if let Some(d) = read_json::<Versioned<serde_json::Value>>(&p)? {
                        max = max.max(d.seq);
                    }
                }
            }
        }
    }
    Ok(max)
}

fn truncate_torn_tail(path: &Path) -> Result<()> {
    let mut f = OpenOptions::new()
        .read(true)
        .write(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating torn meal-log tail");
        f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
        f.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MealSource, MealTime, NutrientSchema, NutrientVector};
    use crate::engine::{apply_meal, generate_daily_plan, AdjustmentPolicy, PlanHistory};
    use crate::testutil::sample_profile;
    use chrono::{TimeZone, Utc};

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 3, 10).unwrap()
    }

    fn meal(id: &str, energy: f64) -> MealRecord {
        MealRecord {
            meal_id: id.into(),
            user_id: "u1".into(),
            date: date(),
            mealtime: MealTime::Lunch,
            timestamp: Utc.with_ymd_and_hms(2025, 3, 10, 12, 30, 0).unwrap(),
            items: vec![],
            nutrients: NutrientVector::from_map(&NutrientSchema::standard(), [("energy", energy)]).unwrap(),
            source: MealSource::Manual,
            confidence: None,
        }
    }

    fn plan() -> DailyPlan {
        generate_daily_plan(
            &sample_profile(),
            DriReference::standard(),
            &PlanHistory::new(),
            &AdjustmentPolicy::default(),
            date(),
        )
        .unwrap()
    }

    #[test]
    fn append_and_read_back() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        assert_eq!(s.append_meal(&meal("m1", 500.0)).unwrap(), 1);
        assert_eq!(fs::read_to_string(s.meal_log_path("u1")).unwrap().lines().count(), 1);
        s.append_meal(&meal("m2", 600.0)).unwrap();
        let ids: Vec<_> = s.list_meals("u1", Some(date())).unwrap().into_iter().map(|m| m.meal_id).collect();
        assert_eq!(ids, ["m1", "m2"]);
    }

    #[test]
    fn duplicate_meal_leaves_log_unchanged() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        s.append_meal(&meal("m1", 500.0)).unwrap();
        let before = fs::read(s.meal_log_path("u1")).unwrap();
        assert!(matches!(s.append_meal(&meal("m1", 500.0)), Err(Error::Duplicate(_))));
        assert_eq!(fs::read(s.meal_log_path("u1")).unwrap(), before);
    }

    #[test]
    fn plan_round_trip_and_integrity() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        let p = apply_meal(&plan(), &meal("m1", 650.0)).unwrap();
        s.update_plan_status(&p).unwrap();
        assert_eq!(s.read_plan("u1", date()).unwrap(), p);
        let mut bad = p.clone();
        bad.remaining.set_named("energy", 1.0).unwrap();
        assert!(matches!(s.update_plan_status(&bad), Err(Error::Integrity(_))));
        assert_eq!(s.read_plan("u1", date()).unwrap(), p);
    }

    #[test]
    fn audit_keeps_last_thirty() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        let p = plan();
        for _ in 0..31 {
            s.update_plan_status(&p).unwrap();
        }
        let audit = s.plan_audit("u1", date()).unwrap();
        assert_eq!(audit.len(), 30);
        assert_eq!(audit.first(), Some(&2));
        assert_eq!(audit.last(), Some(&31));
    }

    #[test]
    fn second_writer_is_refused() {
        let d = tempfile::tempdir().unwrap();
        let _a = Store::open(d.path()).unwrap();
        assert!(matches!(Store::open(d.path()), Err(Error::WriterLocked(_))));
    }

    #[test]
    fn lock_released_on_drop_and_seq_recovered() {
        let d = tempfile::tempdir().unwrap();
        {
            let s = Store::open(d.path()).unwrap();
            s.append_meal(&meal("m1", 1.0)).unwrap();
            s.update_plan_status(&plan()).unwrap();
        }
        let s = Store::open(d.path()).unwrap();
        assert_eq!(s.seq(), 2);
        assert_eq!(s.append_meal(&meal("m2", 1.0)).unwrap(), 3);
    }

    #[test]
    fn profile_round_trip_and_validation() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        assert!(matches!(s.read_profile("u1"), Err(Error::NotFound(_))));
        let p = sample_profile();
        s.write_profile(&p, DriReference::standard()).unwrap();
        assert_eq!(s.read_profile("u1").unwrap(), p);
        let mut bad = p.clone();
        bad.meal_habits.clear();
        assert!(s.write_profile(&bad, DriReference::standard()).is_err());
    }

    #[test]
    fn day_summary_consistency() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        assert!(matches!(s.read_day_summary("u1", date()), Err(Error::NotFound(_))));
        let mut p = plan();
        for (id, e) in [("m1", 500.0), ("m2", 700.0)] {
            let m = meal(id, e);
            s.append_meal(&m).unwrap();
            p = apply_meal(&p, &m).unwrap();
            s.update_plan_status(&p).unwrap();
        }
        // appended but not yet folded into the plan
        s.append_meal(&meal("m3", 100.0)).unwrap();
        let sum = s.read_day_summary("u1", date()).unwrap();
        assert_eq!(sum.meals.len(), 2);
        let total: f64 = sum.meals.iter().map(|m| m.nutrients.get_named("energy").unwrap()).sum();
        assert_eq!(sum.plan.consumed.get_named("energy"), Some(total));
    }

    #[test]
    fn crash_before_rename_keeps_last_version() {
        let d = tempfile::tempdir().unwrap();
        let p1 = plan();
        let p2 = apply_meal(&p1, &meal("m1", 650.0)).unwrap();
        {
            let s = Store::open(d.path()).unwrap();
            s.update_plan_status(&p1).unwrap();
            s.inject_fault_once(FaultPoint::BeforeRename);
            assert!(s.update_plan_status(&p2).is_err());
        }
        let s = Store::open(d.path()).unwrap();
        assert_eq!(s.read_plan("u1", date()).unwrap(), p1);
    }

    #[test]
    fn torn_log_line_is_invisible_and_removed() {
        let d = tempfile::tempdir().unwrap();
        {
            let s = Store::open(d.path()).unwrap();
            s.append_meal(&meal("m1", 1.0)).unwrap();
            s.inject_fault_once(FaultPoint::MidWrite);
            assert!(s.append_meal(&meal("m2", 1.0)).is_err());
            assert_eq!(s.list_meals("u1", None).unwrap().len(), 1);
        }
        let s = Store::open(d.path()).unwrap();
        assert!(fs::read_to_string(s.meal_log_path("u1")).unwrap().ends_with('\n'));
        s.append_meal(&meal("m2", 1.0)).unwrap();
        assert_eq!(s.list_meals("u1", None).unwrap().len(), 2);
    }

    #[test]
    fn blobs_are_content_addressed() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        let h = s.put_blob(b"abc").unwrap();
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(s.get_blob(&h).unwrap(), b"abc");
        assert!(s.get_blob("../x").is_err());
    }

    #[test]
    fn path_unsafe_user_ids_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        assert!(matches!(s.read_profile("../etc"), Err(Error::Contract(_))));
    }
}
