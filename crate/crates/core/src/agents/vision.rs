use serde::{Deserialize, Serialize};

use super::message::AgentMessage;
use crate::backends::{detect_scale_object, MealAnalysis, ModelBackend, PromptContext};
use crate::domain::MealSource;
use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VisionOutcome {
    Analysis {
        analysis: MealAnalysis,
        source: MealSource,
    },
    /// Neither the photo nor the text was usable; ask the user.
    Clarification { question: String },
}

/// Image analysis with text-only estimation and clarification fallbacks.
pub fn vision_analyze(
    msg: &AgentMessage,
    backend: &dyn ModelBackend,
    threshold: f64,
    image_bytes: Option<std::sync::Arc<[u8]>>,
) -> Result<VisionOutcome> {
    let text = msg.text();
    let ctx = PromptContext {
        text: text.map(str::to_string),
        scale_object: text.and_then(detect_scale_object),
        image_bytes,
    };
    if let Some(image_ref) = &msg.image_ref {
        let a = backend.analyze_image(image_ref, &ctx)?;
        a.validate()?;
        if a.confidence >= threshold {
            return Ok(VisionOutcome::Analysis {
                analysis: a,
                source: MealSource::ImageText,
            });
        }
    }
    if let Some(t) = text {
        match backend.analyze_text(t, &ctx) {
            Ok(a) => {
                a.validate()?;
                if a.confidence >= threshold {
                    return Ok(VisionOutcome::Analysis {
                        analysis: a,
                        source: MealSource::TextOnly,
                    });
                }
            }
            // Nothing recognisable in the description: same as low confidence.
            Err(Error::FixtureMiss(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(VisionOutcome::Clarification {
        question: if msg.image_ref.is_some() {
            "The photo was hard to read. Could you describe what you ate and roughly how much, or retake the photo with a fork or coin next to the plate?".into()
        } else {
            "Could you describe the foods in this meal and roughly how much of each?".into()
        },
    })
}
