use chrono::NaiveDate;

use super::adjust::adjust_targets;
use super::history::PlanHistory;
use super::policy::AdjustmentPolicy;
use crate::domain::{validate_profile, DailyPlan, MealRecord, NutrientVector, UserProfile};
use crate::dri::DriReference;
use crate::error::{Error, Result};

/// Reference row for the profile, or an adjusted copy when there is history.
///
/// Early in a user's history the window shrinks to the days available, so a
/// two-day-old account with `window_days = 3` averages over two days.
pub fn day_targets(
    profile: &UserProfile,
    reference: &DriReference,
    history: &PlanHistory,
    policy: &AdjustmentPolicy,
) -> Result<NutrientVector> {
    let rda = reference.lookup_category(profile.category(), &profile.life_stage)?;
    if history.is_empty() {
        return Ok(rda.clone());
    }
    let effective = AdjustmentPolicy {
        window_days: policy.window_days.min(history.len()),
        ..*policy
    };
    Ok(adjust_targets(history, rda, &effective)?.targets)
}

pub fn generate_daily_plan(
    profile: &UserProfile,
    reference: &DriReference,
    history: &PlanHistory,
    policy: &AdjustmentPolicy,
    date: NaiveDate,
) -> Result<DailyPlan> {
    validate_profile(profile, reference).into_result()?;
    if let Some(last) = history.last() {
        if date <= last.date {
            return Err(Error::contract(format!(
                "plan date {date} is not after the last history day {}",
                last.date
            )));
        }
    }
    let targets = day_targets(profile, reference, history, policy)?;
    let consumed = NutrientVector::zeros(targets.schema());
    let remaining = targets.sub(&consumed)?;
    Ok(DailyPlan {
        user_id: profile.user_id.clone(),
        date,
        targets,
        consumed,
        remaining,
        meals_logged: Vec::new(),
        meals_remaining: profile.meal_habits.iter().map(|h| h.mealtime).collect(),
    })
}

/// Folds one meal into the day's budget.
///
/// `remaining` is recomputed from `targets - consumed` rather than
/// decremented, so long meal sequences cannot drift.
pub fn apply_meal(plan: &DailyPlan, meal: &MealRecord) -> Result<DailyPlan> {
    if meal.user_id != plan.user_id {
        return Err(Error::contract(format!(
            "meal {} belongs to {}, plan belongs to {}",
            meal.meal_id, meal.user_id, plan.user_id
        )));
    }
    if meal.date != plan.date {
        return Err(Error::contract(format!(
            "meal {} is dated {}, plan is for {}",
            meal.meal_id, meal.date, plan.date
        )));
    }
    if plan.meals_logged.iter().any(|m| *m == meal.meal_id) {
        return Err(Error::Duplicate(format!("meal {} already applied", meal.meal_id)));
    }
    let consumed = plan.consumed.add(&meal.nutrients)?;
    let remaining = plan.targets.sub(&consumed)?;
    let mut next = plan.clone();
    next.consumed = consumed;
    next.remaining = remaining;
    next.meals_logged.push(meal.meal_id.clone());
    if let Some(pos) = next.meals_remaining.iter().position(|m| *m == meal.mealtime) {
        next.meals_remaining.remove(pos);
    }
    Ok(next)
}
