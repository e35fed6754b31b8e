use serde::{Deserialize, Serialize};

use super::teacher::{AnnotationTask, GenerationParams, HistoryEntry, TeacherContext, TeacherRequest};
use super::AnnotatorError;

const BUILTIN_PROMPTS: &str = include_str!("../../data/prompts.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// Text with a `{history}` or `{review}` placeholder.
    pub prompt: String,
    #[serde(flatten)]
    pub params: GenerationParams,
}

/// Versioned teacher prompts, one per annotation kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub explicit_preference: PromptSpec,
    pub vague_intention: PromptSpec,
    /// Second wording of the intention prompt; left to the operator.
    #[serde(default)]
    pub vague_intention_alt: Option<PromptSpec>,
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PROMPTS).expect("shipped prompt file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, AnnotatorError> {
        let set: PromptSet =
            serde_json::from_str(text).map_err(|e| AnnotatorError::Config(format!("prompts: {e}")))?;
        if !set.explicit_preference.prompt.contains("{history}") {
            return Err(AnnotatorError::Config("preference prompt lacks {history}".into()));
        }
        for spec in std::iter::once(&set.vague_intention).chain(&set.vague_intention_alt) {
            if !spec.prompt.contains("{review}") {
                return Err(AnnotatorError::Config("intention prompt lacks {review}".into()));
            }
        }
        Ok(set)
    }

    pub fn preference_request(&self, history: Vec<HistoryEntry>) -> TeacherRequest {
        let listing = history
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if e.categories.is_empty() {
                    format!("{}. {}", i + 1, e.title)
                } else {
                    format!("{}. {} ({})", i + 1, e.title, e.categories.join(" > "))
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        TeacherRequest {
            prompt: self.explicit_preference.prompt.replace("{history}", &listing),
            params: self.explicit_preference.params.clone(),
            task: AnnotationTask::ExplicitPreference,
            context: TeacherContext::History(history),
        }
    }

    /// Request for the main intention prompt, or the alternative one when
    /// `alt` is set.
    pub fn intention_request(&self, review: &str, alt: bool) -> Result<TeacherRequest, AnnotatorError> {
        let (spec, task) = if alt {
            let spec = self
                .vague_intention_alt
                .as_ref()
                .ok_or_else(|| AnnotatorError::Config("no alternative intention prompt configured".into()))?;
            (spec, AnnotationTask::VagueIntentionAlt)
        } else {
            (&self.vague_intention, AnnotationTask::VagueIntention)
        };
        let review = review.trim();
        Ok(TeacherRequest {
            prompt: spec.prompt.replace("{review}", review),
            params: spec.params.clone(),
            task,
            context: TeacherContext::Review(review.to_string()),
        })
    }
}
