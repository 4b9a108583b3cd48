use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::BatchStats;
use crate::agents::{
    classify_request, AgentMessage, Orchestrator, RequestClass, ResponseStatus, StepAction, Workflow, WorkflowPolicyTable,
    WorkflowTrace,
};
use crate::domain::MealTime;
use crate::error::{Error, Result};

const STANDARD_FIXTURE: &str = include_str!("../../data/po_traces.json");

/// Minimal over executed step count for a trace.
pub fn compute_po(trace: &WorkflowTrace, table: &WorkflowPolicyTable) -> Result<f64> {
    let s_star = table.min_steps(trace.class)?;
    if s_star == 0 {
        return Err(Error::contract(format!("{} is answered directly and has no step count", trace.class)));
    }
    let s = trace.executed_count;
    if s < s_star {
        return Err(Error::integrity(format!(
            "{} trace ran {s} steps, fewer than the minimum {s_star}",
            trace.class
        )));
    }
    Ok(s_star as f64 / s as f64)
}

/// A hand-labeled request with the workflow it was executed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoLabel {
    pub id: String,
    pub class: RequestClass,
    pub text: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub mealtime: Option<MealTime>,
    pub s_star: usize,
    pub s: usize,
    pub executed: Vec<StepAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoFixture {
    pub version: u32,
    pub traces: Vec<PoLabel>,
}

impl PoFixture {
    pub fn standard() -> Result<Self> {
        Self::parse(STANDARD_FIXTURE)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("trace fixture {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: PoFixture = serde_json::from_str(text)?;
        if f.version != 1 {
            return Err(Error::config(format!("unsupported trace fixture version {}", f.version)));
        }
        for t in &f.traces {
            if t.s != t.executed.len() {
                return Err(Error::config(format!("trace {}: s = {} but {} steps listed", t.id, t.s, t.executed.len())));
            }
        }
        Ok(f)
    }

    pub fn message(&self, label: &PoLabel, user: &str, date: chrono::NaiveDate, at: DateTime<Utc>) -> AgentMessage {
        AgentMessage {
            user_id: user.into(),
            date,
            mealtime: label.mealtime,
            meal_id: Some(label.id.clone()),
            text: Some(label.text.clone()),
            image_ref: label.image_ref.clone(),
            received_at: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoResult {
    pub id: String,
    pub class: RequestClass,
    /// What the controller classified the request as.
    pub classified: RequestClass,
    pub s_star: usize,
    pub s: usize,
    pub po: f64,
}

/// Replays each labeled request with its recorded workflow and scores the
/// resulting trace. Every request must complete.
pub fn replay_fixture(orch: &Orchestrator, fixture: &PoFixture, user: &str) -> Result<Vec<PoResult>> {
    let table = &orch.parts().policy_table;
    let profile = orch.profile(user)?;
    let mut out = Vec::with_capacity(fixture.traces.len());
    for label in &fixture.traces {
        let now = orch.now();
        let msg = fixture.message(label, user, orch.local_date(&profile, now)?, now);
        let classified = classify_request(&msg, orch.parts().backends.controller.as_ref())?;
        let wf = Workflow {
            class: label.class,
            steps: label.executed.clone(),
        };
        let (resp, trace) = orch.execute_workflow(&wf, &msg);
        if resp.status == ResponseStatus::Error || !trace.completed {
            return Err(Error::integrity(format!("trace {} did not complete: {:?}", label.id, resp.error)));
        }
        out.push(PoResult {
            id: label.id.clone(),
            class: label.class,
            classified,
            s_star: label.s_star,
            s: trace.executed_count,
            po: compute_po(&trace, table)?,
        });
    }
    Ok(out)
}

pub fn po_stats(results: &[PoResult]) -> Option<BatchStats> {
    BatchStats::of(&results.iter().map(|r| r.po).collect::<Vec<_>>())
}
