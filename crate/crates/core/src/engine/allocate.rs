use serde::{Deserialize, Serialize};

use crate::domain::{DailyPlan, MealHabit, MealTime, NutrientVector};
use crate::error::{Error, Result};

/// Portion of the day's remaining needs assigned to one upcoming meal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealBudget {
    pub mealtime: MealTime,
    pub share: NutrientVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub budgets: Vec<MealBudget>,
    /// Set when nothing could be allocated, e.g. every meal is already logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

/// Splits `max(remaining, 0)` across `plan.meals_remaining` in proportion to
/// the habit weights, renormalized over those meals.
///
/// The last meal takes whatever the others leave, so the shares add back to
/// the clamped remaining value up to one rounding step.
pub fn allocate_remaining(plan: &DailyPlan, habits: &[MealHabit]) -> Result<Allocation> {
    if plan.meals_remaining.is_empty() {
        return Ok(Allocation {
            budgets: Vec::new(),
            advisory: Some("no meals remaining today; nothing to allocate".into()),
        });
    }
    let raw: Vec<f64> = plan
        .meals_remaining
        .iter()
        .map(|m| {
            habits
                .iter()
                .find(|h| h.mealtime == *m)
                .map(|h| h.weight)
                .unwrap_or(0.0)
        })
        .collect();
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::contract("habit weights must be finite and non-negative"));
    }
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = if sum > 0.0 {
        raw.iter().map(|w| w / sum).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    };

    let schema = plan.remaining.schema();
    let mut shares = vec![NutrientVector::empty(schema); weights.len()];
    let last = weights.len() - 1;
    for (i, rem) in plan.remaining.iter_present() {
        let total = rem.max(0.0);
        let mut given = 0.0;
        for (j, w) in weights.iter().enumerate() {
            let v = if j == last { (total - given).max(0.0) } else { total * w };
            given += v;
            shares[j].set(i, v)?;
        }
    }
    Ok(Allocation {
        budgets: plan
            .meals_remaining
            .iter()
            .zip(shares)
            .map(|(m, share)| MealBudget { mealtime: *m, share })
            .collect(),
        advisory: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NutrientSchema;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn plan(remaining: f64, meals: Vec<MealTime>) -> DailyPlan {
        let schema = NutrientSchema::standard();
        let targets = NutrientVector::from_map(&schema, [("energy", 4000.0)]).unwrap();
        let mut consumed = NutrientVector::zeros(&schema);
        consumed.set_named("energy", 4000.0 - remaining).unwrap();
        DailyPlan {
            user_id: "u1".into(),
            date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(),
            remaining: targets.sub(&consumed).unwrap(),
            targets,
            consumed,
            meals_logged: vec![],
            meals_remaining: meals,
        }
    }

    fn habits(pairs: &[(MealTime, f64)]) -> Vec<MealHabit> {
        pairs.iter().map(|&(mealtime, weight)| MealHabit { mealtime, weight }).collect()
    }

    fn energy(b: &MealBudget) -> f64 {
        b.share.get_named("energy").unwrap()
    }

    #[test]
    fn even_split() {
        let a = allocate_remaining(
            &plan(1350.0, vec![MealTime::Lunch, MealTime::Dinner]),
            &habits(&[(MealTime::Lunch, 0.5), (MealTime::Dinner, 0.5)]),
        )
        .unwrap();
        assert_eq!(a.budgets.len(), 2);
        assert_eq!(energy(&a.budgets[0]), 675.0);
        assert_eq!(energy(&a.budgets[1]), 675.0);
    }

    #[test]
    fn overconsumption_allocates_nothing() {
        let a = allocate_remaining(
            &plan(-200.0, vec![MealTime::Lunch, MealTime::Dinner]),
            &habits(&[(MealTime::Lunch, 0.5), (MealTime::Dinner, 0.5)]),
        )
        .unwrap();
        assert!(a.budgets.iter().all(|b| energy(b) == 0.0));
    }

    // Oracle: 0.4 / (0.4 + 0.35) and 0.35 / (0.4 + 0.35) of the remainder.
    #[test]
    fn weights_are_renormalized() {
        let h = habits(&[(MealTime::Breakfast, 0.25), (MealTime::Lunch, 0.4), (MealTime::Dinner, 0.35)]);
        let a = allocate_remaining(&plan(1500.0, vec![MealTime::Lunch, MealTime::Dinner]), &h).unwrap();
        let lunch = 1500.0 * 0.4 / 0.75;
        assert!((energy(&a.budgets[0]) - lunch).abs() < 1e-9);
        assert!((energy(&a.budgets[1]) - (1500.0 - lunch)).abs() < 1e-9);
        assert!((energy(&a.budgets[0]) / 1500.0 - 0.533).abs() < 1e-3);
        assert!((energy(&a.budgets[1]) / 1500.0 - 0.467).abs() < 1e-3);
    }

    #[test]
    fn no_meals_left_is_an_advisory() {
        let a = allocate_remaining(&plan(500.0, vec![]), &habits(&[(MealTime::Lunch, 1.0)])).unwrap();
        assert!(a.budgets.is_empty());
        assert!(a.advisory.is_some());
    }

    #[test]
    fn zero_weights_split_evenly() {
        let a = allocate_remaining(&plan(900.0, vec![MealTime::Snack, MealTime::Dinner]), &[]).unwrap();
        assert_eq!(energy(&a.budgets[0]), 450.0);
        assert_eq!(energy(&a.budgets[1]), 450.0);
    }

    #[test]
    fn masked_targets_stay_masked() {
        let a = allocate_remaining(&plan(900.0, vec![MealTime::Dinner]), &[]).unwrap();
        assert_eq!(a.budgets[0].share.present_count(), 1);
    }

    proptest! {
        #[test]
        fn shares_conserve_the_clamped_remainder(
            remaining in -3000.0f64..3000.0,
            w in proptest::collection::vec(0.0f64..1.0, 1..5),
        ) {
            let times = [MealTime::Breakfast, MealTime::Lunch, MealTime::Dinner, MealTime::Snack];
            let meals: Vec<MealTime> = times[..w.len()].to_vec();
            let h: Vec<MealHabit> = meals.iter().zip(&w).map(|(&mealtime, &weight)| MealHabit { mealtime, weight }).collect();
            let p = plan(remaining, meals);
            let a = allocate_remaining(&p, &h).unwrap();
            let total = p.remaining.get_named("energy").unwrap().max(0.0);
            let sum: f64 = a.budgets.iter().map(energy).sum();
            prop_assert!(a.budgets.iter().all(|b| energy(b) >= 0.0));
            prop_assert!((sum - total).abs() <= 2.0 * f64::EPSILON * total.max(1.0));
        }
    }
}
