use serde::Deserialize;

use super::message::{AgentMessage, RequestClass};
use crate::backends::ModelBackend;
use crate::domain::{MealTime, NutrientSchema};
use crate::error::{Error, Result};

const ADVICE: &[&str] = &[
    "recommend",
    "suggest",
    "what should i eat",
    "what should i have",
    "what to eat",
    "what can i eat",
    "next meal",
    "advice",
    "ideas for",
];

const LOG: &[&str] = &[
    "log ",
    "log:",
    "record ",
    "i ate",
    "i had",
    "i've had",
    "i just had",
    "just ate",
    "my breakfast was",
    "my lunch was",
    "my dinner was",
    "for breakfast i",
    "for lunch i",
    "for dinner i",
];

const STATUS: &[&str] = &[
    "remaining",
    "left today",
    "left for today",
    "how much more",
    "my plan",
    "my progress",
    "my status",
    "so far today",
    "my budget",
    "have i eaten",
    "how am i doing",
    "consumed today",
];

const NUTRITION: &[&str] = &[
    "vitamin",
    "mineral",
    "nutrient",
    "nutrition",
    "calorie",
    "kcal",
    "fibre",
    "carb",
    "diet",
    "rda",
    "dietary reference",
];

/// Words that suggest the user is talking about food without a clear ask.
const FOODISH: &[&str] = &["eat", "food", "meal", "snack", "breakfast", "lunch", "dinner", "hungry"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOutcome {
    Decided(RequestClass),
    /// Food-related text that fits no rule; the controller backend decides.
    Ambiguous,
}

fn any(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| text.contains(w))
}

fn mentions_nutrient(text: &str) -> bool {
    if any(text, NUTRITION) {
        return true;
    }
    NutrientSchema::standard()
        .fields()
        .iter()
        .any(|f| text.contains(&f.name.replace('_', " ")))
}

/// The deterministic part of classification.
pub fn classify_rules(msg: &AgentMessage) -> Result<RuleOutcome> {
    msg.validate()?;
    let text = msg.text().unwrap_or("").to_lowercase();
    let advice = any(&text, ADVICE);
    if msg.image_ref.is_some() {
        return Ok(RuleOutcome::Decided(if advice {
            RequestClass::MealLogAndRecommend
        } else {
            RequestClass::MealLog
        }));
    }
    if any(&text, LOG) {
        return Ok(RuleOutcome::Decided(if advice {
            RequestClass::MealLogAndRecommend
        } else {
            RequestClass::MealLog
        }));
    }
    if advice {
        return Ok(RuleOutcome::Decided(RequestClass::NextMealRecommendation));
    }
    if any(&text, STATUS) {
        return Ok(RuleOutcome::Decided(RequestClass::PlanStatusQuery));
    }
    if mentions_nutrient(&text) {
        return Ok(RuleOutcome::Decided(RequestClass::LightNutritionQuestion));
    }
    if any(&text, FOODISH) {
        return Ok(RuleOutcome::Ambiguous);
    }
    Ok(RuleOutcome::Decided(RequestClass::GeneralQuestion))
}

#[derive(Deserialize)]
struct ClassifyReply {
    class: String,
}

/// Rule cascade first; only ambiguous text reaches the backend, whose answer
/// must name one of the known classes.
pub fn classify_request(msg: &AgentMessage, controller: &dyn ModelBackend) -> Result<RequestClass> {
    match classify_rules(msg)? {
        RuleOutcome::Decided(c) => Ok(c),
        RuleOutcome::Ambiguous => {
            let prompt = serde_json::json!({
                "task": "classify",
                "text": msg.text().unwrap_or(""),
                "classes": RequestClass::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            });
            let reply = controller.complete_text(&prompt.to_string())?;
            let r: ClassifyReply = serde_json::from_str(&reply)
                .map_err(|e| Error::integrity(format!("classification reply: {e}")))?;
            r.class
                .parse()
                .map_err(|_| Error::integrity(format!("backend returned unknown class {:?}", r.class)))
        }
    }
}

/// Mealtime named in free text, if any.
pub fn mealtime_in_text(text: &str) -> Option<MealTime> {
    let lower = text.to_lowercase();
    [
        ("breakfast", MealTime::Breakfast),
        ("lunch", MealTime::Lunch),
        ("dinner", MealTime::Dinner),
        ("supper", MealTime::Dinner),
        ("snack", MealTime::Snack),
    ]
    .into_iter()
    .find(|(w, _)| lower.contains(w))
    .map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendRole, MockBackend, MockSpec, MockVisionFixture};
    use crate::backends::BackendDescriptor;
    use chrono::{NaiveDate, Utc};

    fn msg(text: Option<&str>, image: bool) -> AgentMessage {
        AgentMessage {
            user_id: "u1".into(),
            date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(),
            mealtime: None,
            meal_id: None,
            text: text.map(Into::into),
            image_ref: image.then(|| "snap_001.jpg".to_string()),
            received_at: Utc::now(),
        }
    }

    fn controller() -> MockBackend {
        MockBackend::new(
            BackendDescriptor::mock(BackendRole::ControllerAssist, MockSpec::default()),
            MockVisionFixture::standard().unwrap(),
        )
        .unwrap()
    }

    fn class(text: Option<&str>, image: bool) -> RequestClass {
        classify_request(&msg(text, image), &controller()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(class(Some("what is vitamin D?"), false), RequestClass::LightNutritionQuestion);
        assert_eq!(class(Some("my lunch, fork for scale"), true), RequestClass::MealLog);
        assert_eq!(class(Some("what should I eat for dinner?"), false), RequestClass::NextMealRecommendation);
    }

    #[test]
    fn other_routes() {
        assert_eq!(class(None, true), RequestClass::MealLog);
        assert_eq!(class(Some("here's lunch, what should I eat tonight?"), true), RequestClass::MealLogAndRecommend);
        assert_eq!(class(Some("log my lunch: beans on toast"), false), RequestClass::MealLog);
        assert_eq!(class(Some("how much protein is remaining?"), false), RequestClass::PlanStatusQuery);
        assert_eq!(class(Some("hello there"), false), RequestClass::GeneralQuestion);
        assert_eq!(class(Some("is iron important?"), false), RequestClass::LightNutritionQuestion);
    }

    #[test]
    fn ambiguous_text_goes_to_backend() {
        assert_eq!(classify_rules(&msg(Some("dinner?"), false)).unwrap(), RuleOutcome::Ambiguous);
        assert_eq!(class(Some("dinner?"), false), RequestClass::GeneralQuestion);
    }

    #[test]
    fn empty_message_is_contract_violation() {
        assert!(matches!(classify_rules(&msg(Some("   "), false)), Err(Error::Contract(_))));
        assert!(matches!(classify_rules(&msg(None, false)), Err(Error::Contract(_))));
    }

    #[test]
    fn mealtime_detection() {
        assert_eq!(mealtime_in_text("log my Lunch"), Some(MealTime::Lunch));
        assert_eq!(mealtime_in_text("a banana"), None);
    }
}
