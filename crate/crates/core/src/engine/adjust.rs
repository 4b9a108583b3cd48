use super::history::PlanHistory;
use super::policy::AdjustmentPolicy;
use crate::domain::NutrientVector;
use crate::error::{Error, Result};

/// Mean signed residual (target - achieved) of nutrient `nutrient` over the
/// `k` history entries ending at index `t` (inclusive).
///
/// Achieved intake that was never recorded counts as zero. Returns `None`
/// when the target is undefined on any day of the window.
pub fn residual_window(history: &PlanHistory, nutrient: usize, t: usize, k: usize) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::contract("window length must be at least 1"));
    }
    let entries = history.entries();
    if t >= entries.len() {
        return Err(Error::Window {
            requested: t + 1,
            available: entries.len(),
        });
    }
    if t + 1 < k {
        return Err(Error::Window {
            requested: k,
            available: t + 1,
        });
    }
    let mut sum = 0.0;
    for e in &entries[t + 1 - k..=t] {
        let Some(target) = e.targets.get(nutrient) else {
            return Ok(None);
        };
        sum += target - e.achieved.get(nutrient).unwrap_or(0.0);
    }
    Ok(Some(sum / k as f64))
}

/// Result of the day-level update: the new targets and the applied change
/// relative to the last day's targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub targets: NutrientVector,
    pub delta: NutrientVector,
}

/// The raw directional step before cumulative bounds.
pub fn step_for_residual(residual: f64, rda: f64, policy: &AdjustmentPolicy) -> f64 {
    if residual.abs() <= policy.epsilon {
        return 0.0;
    }
    let magnitude = (policy.gain * residual.abs()).min(policy.clamp_frac * rda);
    policy.sign() * residual.signum() * magnitude
}

/// Next-day targets from the most recent residual window.
///
/// Nutrients without a reference value stay masked. The running target is
/// kept within `(1 ± clamp_frac) * RDA`, so `delta` may be smaller than the
/// raw step (or zero) once a bound is reached.
pub fn adjust_targets(
    history: &PlanHistory,
    reference_targets: &NutrientVector,
    policy: &AdjustmentPolicy,
) -> Result<Adjustment> {
    policy.validate()?;
    let last = history.last().ok_or(Error::Window {
        requested: policy.window_days,
        available: 0,
    })?;
    let t = history.len() - 1;
    let mut targets = NutrientVector::empty(reference_targets.schema());
    let mut delta = NutrientVector::empty(reference_targets.schema());
    for (i, rda) in reference_targets.iter_present() {
        let previous = last.targets.get(i).unwrap_or(rda);
        let step = match residual_window(history, i, t, policy.window_days)? {
            Some(residual) => step_for_residual(residual, rda, policy),
            None => 0.0,
        };
        let lo = (1.0 - policy.clamp_frac) * rda;
        let hi = (1.0 + policy.clamp_frac) * rda;
        let next = (previous + step).clamp(lo, hi);
        targets.set(i, next)?;
        delta.set_signed(i, next - previous);
    }
    Ok(Adjustment { targets, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NutrientSchema;
    use crate::engine::history::HistoryEntry;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 1, 1).unwrap() + chrono::Days::new(n as u64)
    }

    fn energy(v: f64) -> NutrientVector {
        NutrientVector::from_map(&NutrientSchema::standard(), [("energy", v)]).unwrap()
    }

    fn history(days: &[(f64, f64)]) -> PlanHistory {
        PlanHistory::from_entries(
            days.iter()
                .enumerate()
                .map(|(i, (t, a))| HistoryEntry {
                    date: day(i as u32),
                    targets: energy(*t),
                    achieved: energy(*a),
                })
                .collect(),
        )
        .unwrap()
    }

    fn energy_idx() -> usize {
        NutrientSchema::standard().require("energy").unwrap()
    }

    #[test]
    fn single_day_window() {
        let h = history(&[(2000.0, 1800.0)]);
        assert_eq!(residual_window(&h, energy_idx(), 0, 1).unwrap(), Some(200.0));
    }

    #[test]
    fn two_day_mean() {
        let h = history(&[(2000.0, 1800.0), (2000.0, 2100.0)]);
        assert_eq!(residual_window(&h, energy_idx(), 1, 2).unwrap(), Some(50.0));
    }

    #[test]
    fn window_longer_than_history_fails() {
        let h = history(&[(2000.0, 1800.0), (2000.0, 2100.0)]);
        match residual_window(&h, energy_idx(), 1, 3) {
            Err(Error::Window { requested: 3, available: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    // Oracle: delta = sign(s*E) * min(alpha*|E|, clamp*RDA), by hand.
    #[test]
    fn proportional_step_matches_hand_arithmetic() {
        let p = AdjustmentPolicy::default();
        let h = history(&[(2000.0, 1800.0)]);
        let adj = adjust_targets(&h, &energy(2000.0), &p).unwrap();
        let expected = 0.3 * 200.0;
        assert_eq!(adj.delta.get_named("energy"), Some(expected));
        assert_eq!(adj.targets.get_named("energy"), Some(2000.0 + expected));
    }

    #[test]
    fn zero_residual_is_dead_band() {
        let h = history(&[(2000.0, 2000.0)]);
        let adj = adjust_targets(&h, &energy(2000.0), &AdjustmentPolicy::default()).unwrap();
        assert_eq!(adj.delta.get_named("energy"), Some(0.0));
        assert_eq!(adj.targets.get_named("energy"), Some(2000.0));
    }

    #[test]
    fn pathological_residual_is_clamped() {
        // E = 5000 against an RDA of 2000: step capped at 0.15 * 2000.
        let p = AdjustmentPolicy::default();
        assert_eq!(step_for_residual(5000.0, 2000.0, &p), 300.0);
        // A drifted previous target is pulled back inside the cumulative band.
        let drifted = history(&[(7000.0, 2000.0)]);
        let adj = adjust_targets(&drifted, &energy(2000.0), &p).unwrap();
        assert_eq!(adj.targets.get_named("energy"), Some(2300.0));
        let starved = history(&[(2000.0, 0.0)]);
        let adj = adjust_targets(&starved, &energy(2000.0), &p).unwrap();
        assert_eq!(adj.delta.get_named("energy"), Some(300.0));
    }

    #[test]
    fn negative_direction_inverts_step() {
        let p = AdjustmentPolicy { direction: -1, ..Default::default() };
        let h = history(&[(2000.0, 1800.0)]);
        let adj = adjust_targets(&h, &energy(2000.0), &p).unwrap();
        assert_eq!(adj.delta.get_named("energy"), Some(-60.0));
    }

    #[test]
    fn overconsumption_lowers_target() {
        let h = history(&[(2000.0, 2200.0)]);
        let adj = adjust_targets(&h, &energy(2000.0), &AdjustmentPolicy::default()).unwrap();
        assert_eq!(adj.delta.get_named("energy"), Some(-60.0));
    }

    #[test]
    fn masked_reference_stays_masked() {
        let h = history(&[(2000.0, 1800.0)]);
        let adj = adjust_targets(&h, &energy(2000.0), &AdjustmentPolicy::default()).unwrap();
        assert_eq!(adj.targets.present_count(), 1);
        assert_eq!(adj.targets.get_named("fat"), None);
    }

    proptest! {
        // Running targets never leave RDA * (1 ± clamp).
        #[test]
        fn cumulative_clamp_holds(
            achieved in proptest::collection::vec(0.0f64..6000.0, 1..12),
            gain in 0.05f64..=1.0,
            clamp in 0.05f64..=0.5,
            direction in prop_oneof![Just(1i8), Just(-1i8)],
        ) {
            let rda = 2000.0;
            let p = AdjustmentPolicy { direction, window_days: 1, gain, clamp_frac: clamp, epsilon: 1e-6 };
            let mut h = PlanHistory::new();
            let mut target = rda;
            for (d, a) in achieved.iter().enumerate() {
                h.push(HistoryEntry { date: day(d as u32), targets: energy(target), achieved: energy(*a) }).unwrap();
                let adj = adjust_targets(&h, &energy(rda), &p).unwrap();
                target = adj.targets.get_named("energy").unwrap();
                prop_assert!((target - rda).abs() <= clamp * rda + 1e-9);
            }
        }

        // Away from the bounds the applied change has the sign of s*E.
        #[test]
        fn directional_soundness(
            residual in -3000.0f64..3000.0,
            direction in prop_oneof![Just(1i8), Just(-1i8)],
        ) {
            prop_assume!(residual.abs() > 1e-6);
            let p = AdjustmentPolicy { direction, ..Default::default() };
            let h = history(&[(4000.0, 4000.0 - residual)]);
            let adj = adjust_targets(&h, &energy(4000.0), &p).unwrap();
            let d = adj.delta.get_named("energy").unwrap();
            prop_assert_eq!(d.signum(), (f64::from(direction) * residual).signum());
        }
    }
}
