use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::profile::MealTime;
use super::vector::NutrientVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MealSource {
    #[serde(rename = "image+text")]
    ImageText,
    #[serde(rename = "text_only")]
    TextOnly,
    #[serde(rename = "manual")]
    Manual,
}

impl MealSource {
    pub fn is_model_estimate(self) -> bool {
        !matches!(self, MealSource::Manual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodItem {
    pub food: String,
    pub mass_g: f64,
}

/// One logged meal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealRecord {
    pub meal_id: String,
    pub user_id: String,
    pub date: NaiveDate,
    pub mealtime: MealTime,
    pub timestamp: DateTime<Utc>,
    pub items: Vec<FoodItem>,
    pub nutrients: NutrientVector,
    pub source: MealSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl MealRecord {
    pub fn validate(&self, tz: chrono_tz::Tz) -> Result<()> {
        if self.meal_id.trim().is_empty() {
            return Err(Error::contract("meal_id is empty"));
        }
        let local = self.timestamp.with_timezone(&tz).date_naive();
        if local != self.date {
            return Err(Error::contract(format!(
                "meal {} timestamp falls on {local} in {tz}, not {}",
                self.meal_id, self.date
            )));
        }
        match (self.source.is_model_estimate(), self.confidence) {
            (true, None) => Err(Error::contract(format!(
                "meal {} is a model estimate but carries no confidence",
                self.meal_id
            ))),
            (_, Some(c)) if !(0.0..=1.0).contains(&c) => Err(Error::contract(format!(
                "meal {} confidence {c} outside [0,1]",
                self.meal_id
            ))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record() -> MealRecord {
        MealRecord {
            meal_id: "m1".into(),
            user_id: "u1".into(),
            date: NaiveDate::from_ymd_opt(2025, 3, 1).unwrap(),
            mealtime: MealTime::Lunch,
            timestamp: Utc.with_ymd_and_hms(2025, 3, 1, 23, 30, 0).unwrap(),
            items: vec![],
            nutrients: NutrientVector::standard_empty(),
            source: MealSource::ImageText,
            confidence: Some(0.9),
        }
    }

    #[test]
    fn timestamp_must_fall_on_local_date() {
        let r = record();
        assert!(r.validate(chrono_tz::UTC).is_ok());
        // 23:30 UTC is already the next day in Tokyo.
        assert!(r.validate(chrono_tz::Asia::Tokyo).is_err());
    }

    #[test]
    fn model_estimates_need_confidence() {
        let mut r = record();
        r.confidence = None;
        assert!(r.validate(chrono_tz::UTC).is_err());
        r.source = MealSource::Manual;
        assert!(r.validate(chrono_tz::UTC).is_ok());
    }

    #[test]
    fn source_wire_names() {
        assert_eq!(serde_json::to_string(&MealSource::ImageText).unwrap(), "\"image+text\"");
        assert_eq!(serde_json::to_string(&MealSource::TextOnly).unwrap(), "\"text_only\"");
    }
}
