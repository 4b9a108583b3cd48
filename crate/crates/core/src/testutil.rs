use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{MealHabit, MealTime, Sex, UserProfile};

pub(crate) fn sample_profile() -> UserProfile {
    UserProfile {
        user_id: "u1".into(),
        sex: Sex::Female,
        life_stage: "19-30 y".into(),
        category: None,
        timezone: "UTC".into(),
        cuisine_frequencies: BTreeMap::new(),
        allergies: BTreeSet::new(),
        meal_habits: vec![
            MealHabit { mealtime: MealTime::Breakfast, weight: 0.25 },
            MealHabit { mealtime: MealTime::Lunch, weight: 0.4 },
            MealHabit { mealtime: MealTime::Dinner, weight: 0.35 },
        ],
    }
}
