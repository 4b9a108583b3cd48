//! The two feedback loops: meal-level budget updates within a day and
//! day-level target adjustment from residual history.

pub mod adjust;
pub mod allocate;
pub mod daily;
pub mod history;
pub mod policy;

pub use adjust::{adjust_targets, residual_window, step_for_residual, Adjustment};
pub use allocate::{allocate_remaining, Allocation, MealBudget};
pub use daily::{apply_meal, day_targets, generate_daily_plan};
pub use history::{HistoryEntry, PlanHistory};
pub use policy::AdjustmentPolicy;
