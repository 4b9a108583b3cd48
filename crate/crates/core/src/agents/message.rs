use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::MealTime;
use crate::error::{Error, Result};

/// One user request as the controller receives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub user_id: String,
    /// User-local calendar day the request is about.
    pub date: NaiveDate,
    #[serde(default)]
    pub mealtime: Option<MealTime>,
    #[serde(default)]
    pub meal_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    /// Opaque image reference, normally a blob digest.
    #[serde(default)]
    pub image_ref: Option<String>,
    pub received_at: DateTime<Utc>,
}

impl AgentMessage {
    pub fn text(&self) -> Option<&str> {
        self.text.as_deref().map(str::trim).filter(|t| !t.is_empty())
    }

    /// Checks a free-form message, which must carry text or an image.
    pub fn validate(&self) -> Result<()> {
        if self.text().is_none() && self.image_ref.is_none() {
            return Err(Error::contract("message needs text or an image"));
        }
        self.validate_for(RequestClass::NextMealRecommendation)
    }

    /// Checks a message routed straight to `class`. Only meal logging and
    /// direct answers need content.
    pub fn validate_for(&self, class: RequestClass) -> Result<()> {
        if self.user_id.trim().is_empty() {
            return Err(Error::contract("message has no user id"));
        }
        let needs_content = class.logs_meal() || class.is_direct();
        if needs_content && self.text().is_none() && self.image_ref.is_none() {
            return Err(Error::contract(format!("a {class} message needs text or an image")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestClass {
    GeneralQuestion,
    LightNutritionQuestion,
    MealLog,
    NextMealRecommendation,
    MealLogAndRecommend,
    PlanStatusQuery,
}

impl RequestClass {
    pub const ALL: [RequestClass; 6] = [
        RequestClass::GeneralQuestion,
        RequestClass::LightNutritionQuestion,
        RequestClass::MealLog,
        RequestClass::NextMealRecommendation,
        RequestClass::MealLogAndRecommend,
        RequestClass::PlanStatusQuery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestClass::GeneralQuestion => "general_question",
            RequestClass::LightNutritionQuestion => "light_nutrition_question",
            RequestClass::MealLog => "meal_log",
            RequestClass::NextMealRecommendation => "next_meal_recommendation",
            RequestClass::MealLogAndRecommend => "meal_log_and_recommend",
            RequestClass::PlanStatusQuery => "plan_status_query",
        }
    }

    /// Answered by the controller alone.
    pub fn is_direct(self) -> bool {
        matches!(self, RequestClass::GeneralQuestion | RequestClass::LightNutritionQuestion)
    }

    pub fn logs_meal(self) -> bool {
        matches!(self, RequestClass::MealLog | RequestClass::MealLogAndRecommend)
    }
}

impl fmt::Display for RequestClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RequestClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown request class {s:?}")))
    }
}
