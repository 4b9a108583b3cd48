//! Controller and worker agents.
//!
//! The controller classifies each message and runs the canonical workflow
//! for its class from the policy table. Workers exchange versioned JSON
//! payloads, and every invocation is recorded in a [`WorkflowTrace`].

pub mod catalog;
pub mod classify;
pub mod dialog;
pub mod message;
pub mod orchestrator;
pub mod policy;
pub mod trace;
pub mod vision;

pub use catalog::{CatalogItem, FoodCatalog};
pub use classify::{classify_request, classify_rules, mealtime_in_text, RuleOutcome};
pub use dialog::{dialog_recommend, within_budget, Recommendation, RecommendedItem};
pub use message::{AgentMessage, RequestClass};
pub use orchestrator::{
    error_code, mealtime_for_hour, AgentResponse, AgentSettings, ErrorBody, Orchestrator, OrchestratorParts,
    ResponseStatus,
};
pub use policy::{PolicyEntry, StepAction, Workflow, WorkflowPolicyTable};
pub use trace::{StepRecord, StepStatus, WorkflowTrace, PAYLOAD_VERSION};
pub use vision::{vision_analyze, VisionOutcome, DEFAULT_CONFIDENCE_THRESHOLD};
