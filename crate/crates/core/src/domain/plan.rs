use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::profile::MealTime;
use super::vector::NutrientVector;
use crate::error::{Error, Result};

/// One user's targets and intake for one day.
///
/// `remaining` is signed: negative entries record overconsumption and are
/// only clamped when a next-meal budget is allocated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPlan {
    pub user_id: String,
    pub date: NaiveDate,
    pub targets: NutrientVector,
    pub consumed: NutrientVector,
    pub remaining: NutrientVector,
    pub meals_logged: Vec<String>,
    pub meals_remaining: Vec<MealTime>,
}

impl DailyPlan {
    /// Verifies `remaining == targets - consumed` exactly on every present target.
    pub fn check_identity(&self) -> Result<()> {
        let expected = self.targets.sub(&self.consumed)?;
        if expected == self.remaining {
            return Ok(());
        }
        let schema = self.targets.schema();
        for i in 0..schema.len() {
            if expected.get(i) != self.remaining.get(i) {
                return Err(Error::integrity(format!(
                    "plan {} {}: remaining {} = {:?}, but targets - consumed = {:?}",
                    self.user_id,
                    self.date,
                    schema.field(i).name,
                    self.remaining.get(i),
                    expected.get(i)
                )));
            }
        }
        Err(Error::integrity("remaining budget does not match targets - consumed"))
    }
}
