//! Meal-level nutrition tracking with closed-loop daily targets.

pub mod agents;
pub mod api;
pub mod backends;
pub mod clock;
pub mod config;
pub mod domain;
pub mod dri;
pub mod engine;
pub mod eval;
pub mod error;
pub mod store;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
