use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::da::{run_da, DaConfig, DaReport};
use super::latency::{run_latency, LatencyRun};
use super::metrics::{compute_mae, fixture_predictions, MetricsReport};
use super::po::{po_stats, replay_fixture, PoFixture, PoResult};
use super::scenarios::{gen_scenarios, ClassMix};
use super::BatchStats;
use crate::agents::{Orchestrator, OrchestratorParts};
use crate::backends::{BackendDescriptor, BackendRole, BackendSet, MockBackend, MockSpec, MockVisionFixture};
use crate::clock::SystemClock;
use crate::domain::{MealHabit, MealTime, Sex, UserProfile};
use crate::dri::DriReference;
use crate::engine::AdjustmentPolicy;
use crate::error::{Error, Result};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub scenario_count: usize,
    pub class_mix: ClassMix,
    pub random_seeds: usize,
    /// Probability of flipping each engine target change for the noisy row.
    pub sign_flip_p: f64,
    /// Drop probability for micronutrient fields in the masked MAE run.
    pub micronutrient_mask_p: f64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub latency_delay_ms: u64,
    pub latency_requests: usize,
    pub vision_fixture: Option<PathBuf>,
    pub trace_fixture: Option<PathBuf>,
    pub policy: AdjustmentPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 20250101,
            scenario_count: 20,
            class_mix: ClassMix::default(),
            random_seeds: 50,
            sign_flip_p: 0.1,
            micronutrient_mask_p: 0.39,
            bootstrap_resamples: 10_000,
            ci_level: 0.95,
            latency_delay_ms: 20,
            latency_requests: 50,
            vision_fixture: None,
            trace_fixture: None,
            policy: AdjustmentPolicy::default(),
        }
    }
}

impl EvalConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("eval config: {e}")))
    }

    pub fn vision(&self) -> Result<MockVisionFixture> {
        match &self.vision_fixture {
            Some(p) => load_named(p, MockVisionFixture::from_file),
            None => MockVisionFixture::standard(),
        }
    }

    pub fn traces(&self) -> Result<PoFixture> {
        match &self.trace_fixture {
            Some(p) => load_named(p, PoFixture::from_file),
            None => PoFixture::standard(),
        }
    }

    pub fn da_config(&self) -> DaConfig {
        DaConfig {
            policy: self.policy,
            flip_p: self.sign_flip_p,
            random_seeds: self.random_seeds,
            level: self.ci_level,
            resamples: self.bootstrap_resamples,
            seed: self.seed,
        }
    }
}

fn load_named<T>(path: &Path, load: impl Fn(&Path) -> Result<T>) -> Result<T> {
    if !path.is_file() {
        return Err(Error::config(format!("fixture file not found: {}", path.display())));
    }
    load(path)
}

/// Profile used by every evaluation run.
pub fn eval_profile(user: &str) -> UserProfile {
    UserProfile {
        user_id: user.into(),
        sex: Sex::Female,
        life_stage: "19-30 y".into(),
        category: None,
        timezone: "UTC".into(),
        cuisine_frequencies: BTreeMap::new(),
        allergies: BTreeSet::new(),
        meal_habits: vec![
            MealHabit { mealtime: MealTime::Breakfast, weight: 0.25 },
            MealHabit { mealtime: MealTime::Lunch, weight: 0.35 },
            MealHabit { mealtime: MealTime::Dinner, weight: 0.3 },
            MealHabit { mealtime: MealTime::Snack, weight: 0.1 },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySection {
    pub zero_noise: MetricsReport,
    pub masked: MetricsReport,
    pub mask_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningSection {
    pub po: Option<BatchStats>,
    pub traces: Vec<PoResult>,
    pub latency: LatencyRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: EvalConfig,
    pub accuracy: AccuracySection,
    pub planning: PlanningSection,
    pub adaptation: DaReport,
}

/// Vision estimates over the fixture with the given mock settings.
pub fn accuracy_run(vision: &MockVisionFixture, spec: MockSpec) -> Result<MetricsReport> {
    let backend = MockBackend::new(BackendDescriptor::mock(BackendRole::Vision, spec), vision.clone())?;
    compute_mae(&fixture_predictions(&backend, vision)?)
}

pub fn accuracy_section(cfg: &EvalConfig, vision: &MockVisionFixture) -> Result<AccuracySection> {
    let zero_noise = accuracy_run(vision, MockSpec { seed: cfg.seed, ..MockSpec::default() })?;
    let masked = accuracy_run(
        vision,
        MockSpec {
            seed: cfg.seed,
            mask: [("micronutrients".to_string(), cfg.micronutrient_mask_p)].into(),
            ..MockSpec::default()
        },
    )?;
    Ok(AccuracySection {
        zero_noise,
        masked,
        mask_p: cfg.micronutrient_mask_p,
    })
}

/// Replays the labeled trace fixture against a fresh store.
pub fn po_run(vision: &MockVisionFixture, traces: &PoFixture) -> Result<Vec<PoResult>> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let store = Arc::new(Store::open(dir.path())?);
    let mock = |role| -> Result<Arc<dyn crate::backends::ModelBackend>> {
        Ok(Arc::new(MockBackend::new(BackendDescriptor::mock(role, MockSpec::default()), vision.clone())?))
    };
    let backends = BackendSet {
        vision: mock(BackendRole::Vision)?,
        dialog: mock(BackendRole::Dialog)?,
        controller: mock(BackendRole::ControllerAssist)?,
        file: mock(BackendRole::FileAssist)?,
    };
    let orch = Orchestrator::new(OrchestratorParts::standard(store, backends, Arc::new(SystemClock))?);
    let profile = eval_profile("po");
    orch.write_profile(&profile)?;
    replay_fixture(&orch, traces, &profile.user_id)
}

pub fn da_run(cfg: &EvalConfig) -> Result<DaReport> {
    let p = eval_profile("da");
    let targets = DriReference::standard().lookup(p.sex, &p.life_stage)?.clone();
    let set = gen_scenarios(cfg.scenario_count, &cfg.class_mix, cfg.seed, &targets)?;
    run_da(set, &cfg.da_config())
}

pub fn run_eval_suite(cfg: &EvalConfig) -> Result<SuiteReport> {
    let vision = cfg.vision()?;
    let traces = cfg.traces()?;
    let accuracy = accuracy_section(cfg, &vision)?;
    let results = po_run(&vision, &traces)?;
    let latency = run_latency(&traces, &vision, cfg.latency_delay_ms, cfg.latency_requests)?;
    let adaptation = da_run(cfg)?;
    Ok(SuiteReport {
        config: cfg.clone(),
        accuracy,
        planning: PlanningSection {
            po: po_stats(&results),
            traces: results,
            latency,
        },
        adaptation,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::config(format!("writing {}: {e}", path.display()))
}

/// Writes one delimited table per metric family into `dir`.
pub fn write_tables(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("accuracy.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["run", "field_set", "mae_kcal", "mae_g", "mae_mg", "mae_mcg", "coverage"])
        .map_err(csv_err(&path))?;
    for (run, m) in [("zero_noise", &report.accuracy.zero_noise), ("masked", &report.accuracy.masked)] {
        for r in &m.sets {
            let unit = |u: &str| r.mae_by_unit.get(u).map(|v| format!("{v}")).unwrap_or_default();
            let set = serde_json::to_value(r.set)?.as_str().unwrap_or_default().to_string();
            w.write_record([run.to_string(), set, unit("kcal"), unit("g"), unit("mg"), unit("mcg"), r.coverage.to_string()])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("po.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["id", "class", "classified", "s_star", "s", "po"]).map_err(csv_err(&path))?;
    for t in &report.planning.traces {
        w.write_record([t.id.clone(), t.class.to_string(), t.classified.to_string(), t.s_star.to_string(), t.s.to_string(), t.po.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("latency.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["id", "class", "latency_s", "injected_s", "within_budget"]).map_err(csv_err(&path))?;
    for s in &report.planning.latency.samples {
        w.write_record([s.id.clone(), s.class.to_string(), s.latency_s.to_string(), s.injected_s.to_string(), s.within_budget.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("da.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["method", "mean_da", "ci_lo", "ci_hi"]).map_err(csv_err(&path))?;
    for (m, mean, (lo, hi)) in report.adaptation.table() {
        w.write_record([m.to_string(), mean.to_string(), lo.to_string(), hi.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_fixture_names_the_file() {
        let cfg = EvalConfig {
            trace_fixture: Some("/nonexistent/traces.json".into()),
            ..EvalConfig::default()
        };
        let e = cfg.traces().unwrap_err();
        assert!(e.to_string().contains("/nonexistent/traces.json"), "{e}");
    }

    #[test]
    fn config_parses_partial_toml() {
        let cfg = EvalConfig::from_toml("seed = 7\nrandom_seeds = 5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.random_seeds, 5);
        assert_eq!(cfg.scenario_count, 20);
        assert!(EvalConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn po_replay_matches_labels() {
        let vision = MockVisionFixture::standard().unwrap();
        let traces = PoFixture::standard().unwrap();
        let results = po_run(&vision, &traces).unwrap();
        for (r, l) in results.iter().zip(&traces.traces) {
            assert_eq!(r.classified, l.class, "{}", l.id);
            assert_eq!(r.s, l.s);
            assert_eq!(r.po, l.s_star as f64 / l.s as f64);
        }
    }
}
