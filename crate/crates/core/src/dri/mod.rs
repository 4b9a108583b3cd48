//! Reference intake tables: cell cleaning, unit normalization, and the
//! outer join into one lookup keyed by category and life stage.

pub mod merge;
pub mod parse;
pub mod reference;
pub mod units;

pub use merge::merge_tables;
pub use parse::{canonical_life_stage, clean_numeric, parse_rda_table, RawRdaTable, RdaColumn, RdaRow, TableKind};
pub use reference::{DriKey, DriReference};
pub use units::{normalize_units, CanonicalUnitsTable, UnitEntry};

/// Bundled source tables, exposed for tooling and tests.
pub mod sources {
    pub const MINERALS_CSV: &str = include_str!("../../data/dri/minerals.csv");
    pub const VITAMINS_CSV: &str = include_str!("../../data/dri/vitamins.csv");
    pub const MACRONUTRIENTS_CSV: &str = include_str!("../../data/dri/macronutrients.csv");
}
