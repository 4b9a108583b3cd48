use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::scenarios::{Scenario, ScenarioSet};
use crate::engine::{adjust_targets, residual_window, AdjustmentPolicy, HistoryEntry, PlanHistory};
use crate::error::{Error, Result};

/// A residual and the target change that followed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaPair {
    pub nutrient: usize,
    pub residual: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaSummary {
    pub da: f64,
    /// Pairs left after excluding near-zero residuals.
    pub counted: usize,
    pub agreeing: usize,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of pairs whose target change has the sign of `s * residual`.
/// Pairs with `|residual| <= epsilon` are excluded; a zero change never
/// agrees.
pub fn compute_da(pairs: &[DaPair], s: i8, epsilon: f64) -> Result<DaSummary> {
    if s != 1 && s != -1 {
        return Err(Error::contract("policy direction must be +1 or -1"));
    }
    let mut counted = 0;
    let mut agreeing = 0;
    for p in pairs.iter().filter(|p| p.residual.abs() > epsilon) {
        counted += 1;
        if sign(p.delta) == s * sign(p.residual) {
            agreeing += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Undefined("every residual is inside the dead-band".into()));
    }
    Ok(DaSummary {
        da: agreeing as f64 / counted as f64,
        counted,
        agreeing,
    })
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::contract("bootstrap needs at least two values"));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::contract("bootstrap level must be in (0,1) with resamples > 0"));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::from_seed(derive_seed(seed, "bootstrap", 0));
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - tail) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Ok((means[lo], means[hi]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaMethod {
    /// Plan engine, no perturbation.
    Engine,
    /// Plan engine with each target change's sign flipped at a set rate.
    EngineNoisy,
    /// Uniform random sign per pair.
    Random,
    /// Targets never change.
    Static,
}

/// Residual/change pairs the plan engine produces for a one-day scenario.
pub fn engine_pairs(scenario: &Scenario, policy: &AdjustmentPolicy) -> Result<Vec<DaPair>> {
    let history = PlanHistory::from_entries(vec![HistoryEntry {
        date: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
        targets: scenario.targets.clone(),
        achieved: scenario.achieved.clone(),
    }])?;
    let effective = AdjustmentPolicy {
        window_days: policy.window_days.min(history.len()),
        ..*policy
    };
    let adj = adjust_targets(&history, &scenario.targets, &effective)?;
    let mut pairs = Vec::new();
    for (i, _) in scenario.targets.iter_present() {
        if let Some(residual) = residual_window(&history, i, 0, effective.window_days)? {
            pairs.push(DaPair {
                nutrient: i,
                residual,
                delta: adj.delta.get(i).unwrap_or(0.0),
            });
        }
    }
    Ok(pairs)
}

/// Pairs for `method` on one scenario. `seed` drives the random and noisy
/// methods only.
pub fn method_pairs(
    method: DaMethod,
    scenario: &Scenario,
    policy: &AdjustmentPolicy,
    flip_p: f64,
    seed: u64,
) -> Result<Vec<DaPair>> {
    let mut pairs = engine_pairs(scenario, policy)?;
    let mut rng = ChaCha8Rng::from_seed(derive_seed(seed, &format!("{method:?}"), scenario.index as u64));
    for p in &mut pairs {
        match method {
            DaMethod::Engine => {}
            DaMethod::EngineNoisy => {
                if rng.random_bool(flip_p) {
                    p.delta = -p.delta;
                }
            }
            DaMethod::Random => p.delta = if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            DaMethod::Static => p.delta = 0.0,
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaRow {
    pub method: DaMethod,
    pub seed: u64,
    pub mean: f64,
    pub ci: (f64, f64),
    pub per_scenario: Vec<f64>,
    pub counted: usize,
}

/// Mean DA over scenarios with a bootstrap interval over scenario means.
pub fn da_row(
    method: DaMethod,
    set: &ScenarioSet,
    policy: &AdjustmentPolicy,
    flip_p: f64,
    seed: u64,
    level: f64,
    resamples: usize,
) -> Result<DaRow> {
    if !(0.0..=1.0).contains(&flip_p) {
        return Err(Error::config("sign-flip probability must be in [0,1]"));
    }
    let mut per_scenario = Vec::with_capacity(set.scenarios.len());
    let mut counted = 0;
    for s in &set.scenarios {
        let pairs = method_pairs(method, s, policy, flip_p, seed)?;
        let d = compute_da(&pairs, policy.direction, policy.epsilon)?;
        counted += d.counted;
        per_scenario.push(d.da);
    }
    let mean = per_scenario.iter().sum::<f64>() / per_scenario.len() as f64;
    let ci = bootstrap_ci(&per_scenario, level, resamples, seed)?;
    Ok(DaRow {
        method,
        seed,
        mean,
        ci,
        per_scenario,
        counted,
    })
}

/// Random baseline repeated over many seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSweep {
    pub seeds: usize,
    pub mean: f64,
    pub mean_ci: (f64, f64),
    pub mean_ci_width: f64,
    pub rows: Vec<DaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaReport {
    pub engine: DaRow,
    pub engine_noisy: DaRow,
    pub flip_p: f64,
    pub random: RandomSweep,
    pub static_: DaRow,
    pub scenarios: ScenarioSet,
}

impl DaReport {
    /// Engine, random and static rows in table order.
    pub fn table(&self) -> Vec<(&'static str, f64, (f64, f64))> {
        vec![
            ("engine", self.engine.mean, self.engine.ci),
            ("engine_noisy", self.engine_noisy.mean, self.engine_noisy.ci),
            ("random", self.random.mean, self.random.mean_ci),
            ("static", self.static_.mean, self.static_.ci),
        ]
    }
}

pub struct DaConfig {
    pub policy: AdjustmentPolicy,
    pub flip_p: f64,
    pub random_seeds: usize,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

pub fn run_da(set: ScenarioSet, cfg: &DaConfig) -> Result<DaReport> {
    if cfg.random_seeds == 0 {
        return Err(Error::config("random baseline needs at least one seed"));
    }
    let row = |m, seed| da_row(m, &set, &cfg.policy, cfg.flip_p, seed, cfg.level, cfg.resamples);
    let engine = row(DaMethod::Engine, cfg.seed)?;
    let engine_noisy = row(DaMethod::EngineNoisy, cfg.seed)?;
    let static_ = row(DaMethod::Static, cfg.seed)?;
    let rows = (0..cfg.random_seeds as u64)
        .map(|i| row(DaMethod::Random, cfg.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let k = rows.len() as f64;
    let random = RandomSweep {
        seeds: rows.len(),
        mean: rows.iter().map(|r| r.mean).sum::<f64>() / k,
        mean_ci: (
            rows.iter().map(|r| r.ci.0).sum::<f64>() / k,
            rows.iter().map(|r| r.ci.1).sum::<f64>() / k,
        ),
        mean_ci_width: rows.iter().map(|r| r.ci.1 - r.ci.0).sum::<f64>() / k,
        rows,
    };
    Ok(DaReport {
        engine,
        engine_noisy,
        flip_p: cfg.flip_p,
        random,
        static_,
        scenarios: set,
    })
}
