//! Model backends behind one trait: deterministic mocks for tests and demos,
//! and an HTTP adapter for live deployments.

pub mod mock;
pub mod remote;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::NutrientVector;
use crate::error::{Error, Result};

pub use mock::{FieldSelector, MockBackend, MockSpec, MockVisionFixture, TextEntry, VisionEntry};
pub use remote::{RemoteBackend, RemoteSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendRole {
    Vision,
    Dialog,
    ControllerAssist,
    FileAssist,
}

impl BackendRole {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendRole::Vision => "vision",
            BackendRole::Dialog => "dialog",
            BackendRole::ControllerAssist => "controller_assist",
            BackendRole::FileAssist => "file_assist",
        }
    }
}

impl fmt::Display for BackendRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock(MockSpec),
    Remote(RemoteSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub role: BackendRole,
    /// Free-form model identity, e.g. the deployed model name. Informational.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(flatten)]
    pub config: BackendConfig,
}

impl BackendDescriptor {
    pub fn mock(role: BackendRole, spec: MockSpec) -> Self {
        Self {
            role,
            model: None,
            config: BackendConfig::Mock(spec),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self.config {
            BackendConfig::Mock(_) => "mock",
            BackendConfig::Remote(_) => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedItem {
    pub food: String,
    pub mass_g: f64,
    #[serde(default)]
    pub occluded: bool,
}

/// Structured result of image or text meal analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealAnalysis {
    pub items: Vec<AnalyzedItem>,
    pub nutrients: NutrientVector,
    pub confidence: f64,
    #[serde(default)]
    pub used_reference_object: bool,
}

impl MealAnalysis {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::integrity(format!(
                "analysis confidence {} outside [0,1]",
                self.confidence
            )));
        }
        if self.items.iter().any(|i| !(i.mass_g.is_finite() && i.mass_g >= 0.0)) {
            return Err(Error::integrity("analysis item mass must be finite and non-negative"));
        }
        Ok(())
    }
}

/// What the caller knows about a meal besides the image itself.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub text: Option<String>,
    /// Known-size object the user mentioned (fork, coin, ...).
    pub scale_object: Option<String>,
    /// Raw image bytes for adapters that upload them.
    pub image_bytes: Option<Arc<[u8]>>,
}

const SCALE_OBJECTS: [&str; 8] = [
    "credit card",
    "chopsticks",
    "chopstick",
    "spoon",
    "coin",
    "fork",
    "knife",
    "hand",
];

/// First known reference object mentioned in `text`, if any.
pub fn detect_scale_object(text: &str) -> Option<String> {
    let lower = text.to_lowercase();
    SCALE_OBJECTS
        .iter()
        .find(|o| lower.contains(*o))
        .map(|o| o.trim_end_matches('s').to_string())
        .map(|o| if o == "chopstick" { "chopsticks".to_string() } else { o })
}

/// Image-analysis instruction sent to vision backends.
pub fn vision_prompt(ctx: &PromptContext) -> String {
    let mut p = String::from(
        "Identify each food in the photo, estimate its mass in grams, and return per-meal nutrients for the standard schema as JSON.",
    );
    if let Some(obj) = &ctx.scale_object {
        p.push_str(&format!(
            " The photo contains a {obj} for scale; use its known size to estimate portion volume."
        ));
    }
    if let Some(t) = ctx.text.as_deref().filter(|t| !t.trim().is_empty()) {
        p.push_str(" User note: ");
        p.push_str(t.trim());
    }
    p
}

pub trait ModelBackend: Send + Sync + fmt::Debug {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Vision role only.
    fn analyze_image(&self, image_ref: &str, ctx: &PromptContext) -> Result<MealAnalysis>;

    /// Text-only meal estimation; vision role only.
    fn analyze_text(&self, text: &str, ctx: &PromptContext) -> Result<MealAnalysis>;

    /// Structured completion for dialog, controller and file roles. The
    /// prompt and reply are JSON documents.
    fn complete_text(&self, prompt: &str) -> Result<String>;
}

pub(crate) fn require_role(d: &BackendDescriptor, allowed: &[BackendRole], op: &str) -> Result<()> {
    if allowed.contains(&d.role) {
        Ok(())
    } else {
        Err(Error::contract(format!("{op} is not available on a {} backend", d.role)))
    }
}

pub fn build_backend(d: &BackendDescriptor, base_dir: Option<&std::path::Path>) -> Result<Arc<dyn ModelBackend>> {
    Ok(match &d.config {
        BackendConfig::Mock(spec) => {
            let fixture = match &spec.fixture {
                Some(p) => {
                    let p: PathBuf = match base_dir {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.clone(),
                    };
                    MockVisionFixture::from_file(&p)?
                }
                None => MockVisionFixture::standard()?,
            };
            Arc::new(MockBackend::new(d.clone(), fixture)?)
        }
        BackendConfig::Remote(_) => Arc::new(RemoteBackend::new(d.clone())?),
    })
}

/// One backend per role.
#[derive(Debug, Clone)]
pub struct BackendSet {
    pub vision: Arc<dyn ModelBackend>,
    pub dialog: Arc<dyn ModelBackend>,
    pub controller: Arc<dyn ModelBackend>,
    pub file: Arc<dyn ModelBackend>,
}

impl BackendSet {
    /// All four roles as mocks over the bundled fixture with the given spec.
    pub fn mock(spec: MockSpec) -> Result<Self> {
        let fixture = MockVisionFixture::standard()?;
        let make = |role| -> Result<Arc<dyn ModelBackend>> {
            Ok(Arc::new(MockBackend::new(
                BackendDescriptor::mock(role, spec.clone()),
                fixture.clone(),
            )?))
        };
        Ok(Self {
            vision: make(BackendRole::Vision)?,
            dialog: make(BackendRole::Dialog)?,
            controller: make(BackendRole::ControllerAssist)?,
            file: make(BackendRole::FileAssist)?,
        })
    }

    pub fn from_descriptors(ds: &[BackendDescriptor], base_dir: Option<&std::path::Path>) -> Result<Self> {
        let find = |role: BackendRole| -> Result<Arc<dyn ModelBackend>> {
            let d = ds
                .iter()
                .find(|d| d.role == role)
                .ok_or_else(|| Error::config(format!("no backend configured for role {role}")))?;
            build_backend(d, base_dir)
        };
        Ok(Self {
            vision: find(BackendRole::Vision)?,
            dialog: find(BackendRole::Dialog)?,
            controller: find(BackendRole::ControllerAssist)?,
            file: find(BackendRole::FileAssist)?,
        })
    }

    pub fn for_role(&self, role: BackendRole) -> &Arc<dyn ModelBackend> {
        match role {
            BackendRole::Vision => &self.vision,
            BackendRole::Dialog => &self.dialog,
            BackendRole::ControllerAssist => &self.controller,
            BackendRole::FileAssist => &self.file,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_objects_are_found() {
        assert_eq!(detect_scale_object("my lunch, fork for scale").as_deref(), Some("fork"));
        assert_eq!(detect_scale_object("next to Chopsticks").as_deref(), Some("chopsticks"));
        assert_eq!(detect_scale_object("with a credit card").as_deref(), Some("credit card"));
        assert_eq!(detect_scale_object("just soup"), None);
    }

    #[test]
    fn prompt_mentions_scale_object() {
        let ctx = PromptContext {
            text: Some("my lunch, fork for scale".into()),
            scale_object: Some("fork".into()),
            image_bytes: None,
        };
        let p = vision_prompt(&ctx);
        assert!(p.contains("fork for scale"));
        assert!(p.contains("contains a fork"));
    }

    #[test]
    fn descriptor_toml_shape() {
        let d: BackendDescriptor = toml::from_str(
            r#"
            role = "vision"
            mode = "remote"
            endpoint = "http://127.0.0.1:9/v1"
            credentials_env = "MEALLOOP_VISION_KEY"
            "#,
        )
        .unwrap();
        assert_eq!(d.mode(), "remote");
        let d: BackendDescriptor = toml::from_str("role = \"dialog\"\nmode = \"mock\"\nseed = 7\n").unwrap();
        assert_eq!(d.mode(), "mock");
    }
}
