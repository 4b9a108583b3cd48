use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::message::RequestClass;
use crate::backends::BackendRole;
use crate::error::{Error, Result};

const STANDARD_TABLE: &str = include_str!("../../data/workflow_policy.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepAction {
    #[serde(rename = "vision.analyze")]
    VisionAnalyze,
    #[serde(rename = "file.append_meal")]
    FileAppendMeal,
    #[serde(rename = "file.update_plan")]
    FileUpdatePlan,
    #[serde(rename = "file.read_day_summary")]
    FileReadDaySummary,
    #[serde(rename = "file.read_profile")]
    FileReadProfile,
    #[serde(rename = "dialog.recommend")]
    DialogRecommend,
}

impl StepAction {
    pub const ALL: [StepAction; 6] = [
        StepAction::VisionAnalyze,
        StepAction::FileAppendMeal,
        StepAction::FileUpdatePlan,
        StepAction::FileReadDaySummary,
        StepAction::FileReadProfile,
        StepAction::DialogRecommend,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepAction::VisionAnalyze => "vision.analyze",
            StepAction::FileAppendMeal => "file.append_meal",
            StepAction::FileUpdatePlan => "file.update_plan",
            StepAction::FileReadDaySummary => "file.read_day_summary",
            StepAction::FileReadProfile => "file.read_profile",
            StepAction::DialogRecommend => "dialog.recommend",
        }
    }

    /// Worker role that executes the step.
    pub fn role(self) -> BackendRole {
        match self {
            StepAction::VisionAnalyze => BackendRole::Vision,
            StepAction::DialogRecommend => BackendRole::Dialog,
            _ => BackendRole::FileAssist,
        }
    }
}

impl fmt::Display for StepAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown workflow step {s:?}")))
    }
}

/// Ordered worker steps for one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub class: RequestClass,
    pub steps: Vec<StepAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub steps: Vec<StepAction>,
    pub min_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    version: u32,
    classes: BTreeMap<RequestClass, PolicyEntry>,
}

/// Class -> canonical workflow and its minimal worker-step count.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowPolicyTable {
    classes: BTreeMap<RequestClass, PolicyEntry>,
}

impl WorkflowPolicyTable {
    pub fn standard() -> Result<Self> {
        Self::parse(STANDARD_TABLE)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("workflow policy {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: TableDoc =
            toml::from_str(text).map_err(|e| Error::config(format!("workflow policy: {e}")))?;
        if doc.version != 1 {
            return Err(Error::config(format!("unsupported workflow policy version {}", doc.version)));
        }
        for (class, e) in &doc.classes {
            if e.min_steps != e.steps.len() {
                return Err(Error::config(format!(
                    "{class}: min_steps {} differs from the canonical chain length {}",
                    e.min_steps,
                    e.steps.len()
                )));
            }
            if class.is_direct() != e.steps.is_empty() {
                return Err(Error::config(format!(
                    "{class}: only general and light questions may have an empty workflow"
                )));
            }
        }
        Ok(Self { classes: doc.classes })
    }

    pub fn entry(&self, class: RequestClass) -> Result<&PolicyEntry> {
        self.classes
            .get(&class)
            .ok_or_else(|| Error::config(format!("workflow policy has no entry for {class}")))
    }

    /// s* for the class.
    pub fn min_steps(&self, class: RequestClass) -> Result<usize> {
        Ok(self.entry(class)?.min_steps)
    }

    pub fn plan_workflow(&self, class: RequestClass) -> Result<Workflow> {
        Ok(Workflow {
            class,
            steps: self.entry(class)?.steps.clone(),
        })
    }

    pub fn classes(&self) -> impl Iterator<Item = (RequestClass, &PolicyEntry)> {
        self.classes.iter().map(|(c, e)| (*c, e))
    }
}
