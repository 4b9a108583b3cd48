use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::message::RequestClass;
use super::policy::StepAction;
use crate::backends::BackendRole;

/// Version of the inter-agent payload documents recorded in traces.
pub const PAYLOAD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
}

/// One worker invocation. A retried backend call stays one invocation with
/// `attempts > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub role: BackendRole,
    pub action: StepAction,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub status: StepStatus,
    pub attempts: u32,
    /// Versioned payload handed to the next step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowTrace {
    pub class: RequestClass,
    pub steps: Vec<StepRecord>,
    pub tau_in: DateTime<Utc>,
    #[serde(default)]
    pub tau_out: Option<DateTime<Utc>>,
    /// Worker invocations; always `steps.len()`.
    pub executed_count: usize,
    /// False when the workflow stopped early (failure or clarification).
    pub completed: bool,
}

impl WorkflowTrace {
    pub fn new(class: RequestClass, tau_in: DateTime<Utc>) -> Self {
        Self {
            class,
            steps: Vec::new(),
            tau_in,
            tau_out: None,
            executed_count: 0,
            completed: false,
        }
    }

    pub fn push(&mut self, step: StepRecord) {
        self.steps.push(step);
        self.executed_count = self.steps.len();
    }

    /// Stamps the send time. Never earlier than the receipt time or any step.
    pub fn stamp_out(&mut self, now: DateTime<Utc>) {
        let floor = self
            .steps
            .iter()
            .map(|s| s.finished_at)
            .chain([self.tau_in])
            .max()
            .unwrap_or(self.tau_in);
        self.tau_out = Some(now.max(floor));
    }

    pub fn failed_step(&self) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.status == StepStatus::Failed)
    }
}
