use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{DailyPlan, NutrientVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub date: NaiveDate,
    pub targets: NutrientVector,
    pub achieved: NutrientVector,
}

/// Past days' targets and achieved intake for one user, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanHistory {
    entries: Vec<HistoryEntry>,
}

impl PlanHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<HistoryEntry>) -> Result<Self> {
        let mut h = Self::new();
        for e in entries {
            h.push(e)?;
        }
        Ok(h)
    }

    /// Builds history from closed day plans (targets and consumed totals).
    pub fn from_plans<'a>(plans: impl IntoIterator<Item = &'a DailyPlan>) -> Result<Self> {
        let mut entries: Vec<HistoryEntry> = plans
            .into_iter()
            .map(|p| HistoryEntry {
                date: p.date,
                targets: p.targets.clone(),
                achieved: p.consumed.clone(),
            })
            .collect();
        entries.sort_by_key(|e| e.date);
        Self::from_entries(entries)
    }

    pub fn push(&mut self, entry: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.date <= last.date {
                return Err(Error::contract(format!(
                    "history dates must increase: {} after {}",
                    entry.date, last.date
                )));
            }
        }
        if entry.targets.len() != entry.achieved.len() {
            return Err(Error::SchemaMismatch("history entry is not schema-complete".into()));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }
}
