use serde::{Deserialize, Serialize};

use super::catalog::{CatalogItem, FoodCatalog};
use crate::backends::ModelBackend;
use crate::domain::{DailyPlan, MealTime, NutrientVector, UserProfile};
use crate::engine::MealBudget;
use crate::error::{Error, Result};

/// Weight of core nutrients relative to the rest when scoring gap fill.
const CORE_WEIGHT: f64 = 3.0;
/// Keeps unpreferred cuisines eligible, just ranked lower.
const CUISINE_FLOOR: f64 = 0.1;
/// Budget fraction used when there is little intake data for the day.
const SPARSE_DATA_FACTOR: f64 = 0.8;
const MIN_SCALE: f64 = 0.25;
const MAX_SCALE: f64 = 1.0;
const SCALE_STEP: f64 = 0.05;
const MAX_ITEMS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub name: String,
    pub cuisine: String,
    pub staple: bool,
    /// Fraction of the catalog portion.
    pub scale: f64,
    pub portion_g: f64,
    pub nutrients: NutrientVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub mealtime: Option<MealTime>,
    pub items: Vec<RecommendedItem>,
    /// Budget the portions were sized against.
    pub budget: NutrientVector,
    /// Sum of the recommended portions.
    pub totals: NutrientVector,
    /// Set for sparse data or an exhausted budget; portions err small.
    pub conservative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

/// Weighted share of the budget an item covers, in [0, 1].
pub fn gap_fill(item: &NutrientVector, budget: &NutrientVector) -> f64 {
    let schema = budget.schema();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, b) in budget.iter_present() {
        if b <= 0.0 {
            continue;
        }
        let w = if schema.is_core(i) { CORE_WEIGHT } else { 1.0 };
        den += w;
        if let Some(v) = item.get(i) {
            num += w * (v.min(b) / b);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn item_score(item: &CatalogItem, budget: &NutrientVector, profile: &UserProfile) -> f64 {
    gap_fill(&item.nutrients, budget) * (CUISINE_FLOOR + profile.cuisine_weight(&item.cuisine))
}

fn is_safe(item: &CatalogItem, profile: &UserProfile) -> bool {
    !profile.is_allergic_to_any(&item.allergens)
}

/// Largest scale in [MIN_SCALE, MAX_SCALE] (on the SCALE_STEP grid) that
/// keeps every budgeted core nutrient within `room`.
fn fit_scale(item: &NutrientVector, room: &NutrientVector) -> Option<f64> {
    let schema = room.schema();
    let mut s = MAX_SCALE;
    for i in schema.core_indices() {
        let (Some(r), Some(v)) = (room.get(i), item.get(i)) else {
            continue;
        };
        if v > 0.0 {
            s = s.min(r.max(0.0) / v);
        }
    }
    let s = (s / SCALE_STEP + 1e-9).floor() * SCALE_STEP;
    (s >= MIN_SCALE - 1e-12).then_some(s.min(MAX_SCALE))
}

#[derive(Deserialize)]
struct RankReply {
    ranking: Vec<String>,
}

/// Picks foods and portions for the next meal.
///
/// Allergen filtering happens before the backend sees anything, and the
/// backend's ranking is re-checked against the filtered list, so it can
/// reorder candidates but never introduce one.
pub fn dialog_recommend(
    plan: &DailyPlan,
    budgets: &[MealBudget],
    profile: &UserProfile,
    catalog: &FoodCatalog,
    backend: &dyn ModelBackend,
) -> Result<Recommendation> {
    let schema = plan.targets.schema();
    let Some(next) = budgets.first() else {
        return Ok(Recommendation {
            mealtime: None,
            items: vec![],
            budget: NutrientVector::zeros(schema),
            totals: NutrientVector::zeros(schema),
            conservative: true,
            advisory: Some("no meals remaining today".into()),
        });
    };
    if catalog.items.is_empty() {
        return Err(Error::config("food catalog is empty"));
    }

    let sparse = plan.meals_logged.is_empty();
    let mut budget = next.share.clamp_non_negative();
    if sparse {
        budget = budget.scale(SPARSE_DATA_FACTOR);
    }
    let exhausted = schema
        .core_indices()
        .into_iter()
        .filter_map(|i| budget.get(i))
        .all(|v| v <= 0.0);
    let mut rec = Recommendation {
        mealtime: Some(next.mealtime),
        items: vec![],
        totals: NutrientVector::zeros(schema),
        budget: budget.clone(),
        conservative: sparse || exhausted,
        advisory: None,
    };

    let safe: Vec<&CatalogItem> = catalog.items.iter().filter(|i| is_safe(i, profile)).collect();
    if safe.is_empty() {
        rec.advisory = Some("no safe candidates in the catalog for this profile".into());
        return Ok(rec);
    }
    if exhausted {
        rec.advisory = Some("today's core targets are already met; a light, low-energy option or water is enough".into());
        return Ok(rec);
    }

    let mut scored: Vec<(&CatalogItem, f64)> = safe.iter().map(|i| (*i, item_score(i, &budget, profile))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.name.cmp(&b.0.name)));
    let prompt = serde_json::json!({
        "task": "rank",
        "mealtime": next.mealtime,
        "candidates": scored.iter().map(|(i, s)| serde_json::json!({"id": i.name, "score": s})).collect::<Vec<_>>(),
    });
    let reply: RankReply = serde_json::from_str(&backend.complete_text(&prompt.to_string())?)
        .map_err(|e| Error::integrity(format!("ranking reply: {e}")))?;
    let mut order: Vec<&CatalogItem> = Vec::new();
    for name in &reply.ranking {
        if let Some((item, _)) = scored.iter().find(|(i, _)| &i.name == name) {
            if !order.iter().any(|o| o.name == item.name) {
                order.push(item);
            }
        }
    }
    for (item, _) in &scored {
        if !order.iter().any(|o| o.name == item.name) {
            order.push(item);
        }
    }

    // Best staple first, then the best other dishes.
    let mut picks: Vec<&CatalogItem> = order.iter().copied().filter(|i| i.staple).take(1).collect();
    picks.extend(order.iter().copied().filter(|i| !i.staple));

    let mut room = budget.clone();
    for item in picks {
        if rec.items.len() == MAX_ITEMS {
            break;
        }
        let Some(scale) = fit_scale(&item.nutrients, &room) else {
            continue;
        };
        let portion = item.nutrients.scale(scale);
        room = room.sub(&portion)?;
        rec.totals = rec.totals.add(&portion)?;
        rec.items.push(RecommendedItem {
            name: item.name.clone(),
            cuisine: item.cuisine.clone(),
            staple: item.staple,
            scale,
            portion_g: item.portion_g * scale,
            nutrients: portion,
        });
    }
    if rec.items.is_empty() {
        rec.conservative = true;
        rec.advisory = Some("remaining budget is too small for a standard portion; keep the next meal light".into());
    }
    Ok(rec)
}

/// Core totals within the budget, allowing for float rounding.
pub fn within_budget(rec: &Recommendation) -> bool {
    let schema = rec.budget.schema();
    schema.core_indices().into_iter().all(|i| match (rec.budget.get(i), rec.totals.get(i)) {
        (Some(b), Some(t)) => t <= b + 1e-9 * b.abs().max(1.0),
        _ => true,
    })
}
