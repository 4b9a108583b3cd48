//! Shared vocabulary: nutrient schema and vectors, user profiles, meals, plans.

pub mod meal;
pub mod plan;
pub mod profile;
pub mod schema;
pub mod vector;

pub use meal::{FoodItem, MealRecord, MealSource};
pub use plan::DailyPlan;
pub use profile::{
    validate_profile, DriCategory, MealHabit, MealTime, Sex, UserProfile, ValidationReport,
};
pub use schema::{FieldSet, FieldSpec, NutrientGroup, NutrientSchema, Unit, CORE_FIELDS, FIELD_COUNT};
pub use vector::NutrientVector;
