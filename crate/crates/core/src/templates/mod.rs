//! Instruction-format taxonomy, built-in coarse templates and slot filling.

mod body;
mod registry;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use body::{Segment, SlotChoice};
pub use registry::{builtin_registry, select_templates, Registry, TemplateCategory};
pub use render::{
    compose_inferred, cot_response, instantiate, render_events, render_history, render_item_list, SlotText,
    SlotValues, Target,
};

/// How much of the user's long-term taste the instruction exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preference {
    #[serde(rename = "P0")]
    None,
    #[serde(rename = "P1")]
    Implicit,
    #[serde(rename = "P2")]
    Explicit,
}

/// How clearly the user states an immediate need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intention {
    #[serde(rename = "I0")]
    None,
    #[serde(rename = "I1")]
    Vague,
    #[serde(rename = "I2")]
    Specific,
}

/// What the model is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskForm {
    #[serde(rename = "T0")]
    Pointwise,
    /// Constructible, but no built-in template uses it.
    #[serde(rename = "T1")]
    Pairwise,
    #[serde(rename = "T2")]
    Matching,
    #[serde(rename = "T3")]
    Reranking,
}

/// One value per aspect axis.
///
/// The preference axis records the strongest preference signal present:
/// `P2` means an explicit preference text is involved, whether or not the
/// interaction history is also shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AspectTags {
    #[serde(rename = "p")]
    pub preference: Preference,
    #[serde(rename = "i")]
    pub intention: Intention,
    #[serde(rename = "t")]
    pub task_form: TaskForm,
}

impl AspectTags {
    pub const fn new(preference: Preference, intention: Intention, task_form: TaskForm) -> Self {
        AspectTags {
            preference,
            intention,
            task_form,
        }
    }
}

impl fmt::Display for AspectTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.preference {
            Preference::None => "P0",
            Preference::Implicit => "P1",
            Preference::Explicit => "P2",
        };
        let i = match self.intention {
            Intention::None => "I0",
            Intention::Vague => "I1",
            Intention::Specific => "I2",
        };
        let t = match self.task_form {
            TaskForm::Pointwise => "T0",
            TaskForm::Pairwise => "T1",
            TaskForm::Matching => "T2",
            TaskForm::Reranking => "T3",
        };
        write!(f, "{p}-{i}-{t}")
    }
}

impl FromStr for AspectTags {
    type Err = TemplateError;

    /// Parses the `P1-I0-T3` form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TemplateError::BadAspects(s.to_string());
        let parts: Vec<&str> = s.trim().split('-').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let preference = match parts[0] {
            "P0" => Preference::None,
            "P1" => Preference::Implicit,
            "P2" => Preference::Explicit,
            _ => return Err(bad()),
        };
        let intention = match parts[1] {
            "I0" => Intention::None,
            "I1" => Intention::Vague,
            "I2" => Intention::Specific,
            _ => return Err(bad()),
        };
        let task_form = match parts[2] {
            "T0" => TaskForm::Pointwise,
            "T1" => TaskForm::Pairwise,
            "T2" => TaskForm::Matching,
            "T3" => TaskForm::Reranking,
            _ => return Err(bad()),
        };
        Ok(AspectTags::new(preference, intention, task_form))
    }
}

/// Placeholders a template body may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotName {
    HistoricalInteractions,
    ExplicitPreference,
    VagueIntention,
    SpecificIntention,
    CandidateItems,
    TargetItem,
}

impl SlotName {
    pub const ALL: [SlotName; 6] = [
        SlotName::HistoricalInteractions,
        SlotName::ExplicitPreference,
        SlotName::VagueIntention,
        SlotName::SpecificIntention,
        SlotName::CandidateItems,
        SlotName::TargetItem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SlotName::HistoricalInteractions => "HistoricalInteractions",
            SlotName::ExplicitPreference => "ExplicitPreference",
            SlotName::VagueIntention => "VagueIntention",
            SlotName::SpecificIntention => "SpecificIntention",
            SlotName::CandidateItems => "CandidateItems",
            SlotName::TargetItem => "TargetItem",
        }
    }

    /// The slot that carries the user's query under `intention`. Without an
    /// intention the query, if any, is the explicit preference.
    pub fn query_slot(intention: Intention) -> SlotName {
        match intention {
            Intention::None => SlotName::ExplicitPreference,
            Intention::Vague => SlotName::VagueIntention,
            Intention::Specific => SlotName::SpecificIntention,
        }
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlotName {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SlotName::ALL
            .into_iter()
            .find(|slot| slot.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownPlaceholder(s.to_string()))
    }
}

/// Where a slot's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTag {
    FromHistory,
    FromTeacher,
    FromCategories,
    FromReview,
    FromCandidateSampler,
    FromTargetItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    Plain,
    TaskReversal,
    Relatedness,
    Cot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSchema {
    TargetItemTitle,
    YesNo,
    ReasoningThenItem,
    FreeTextInference,
}

/// A slotted instruction template tagged with its aspects.
///
/// Built-in templates may support several aspect triples (`variants`) and
/// carry alternation placeholders such as
/// `{ExplicitPreference|VagueIntention|SpecificIntention}` or optional
/// `[[ ... ]]` groups. [`CoarseTemplate::specialize`] resolves those for one
/// triple; a specialized template has a single variant and a plain body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseTemplate {
    #[serde(rename = "id")]
    pub template_id: String,
    pub category: TemplateCategory,
    pub aspects: AspectTags,
    #[serde(with = "variant_codes")]
    pub variants: Vec<AspectTags>,
    #[serde(rename = "strategy")]
    pub strategy_tag: StrategyTag,
    pub body: String,
    pub target_schema: TargetSchema,
    /// For free-text inference targets: the slots whose content forms the
    /// expected output, in order. May contain alternations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inferred: Vec<String>,
    /// Id of the template that swaps this template's input and output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<String>,
}

/// Variants are stored in the compact `P1-I0-T3` form.
mod variant_codes {
    use super::AspectTags;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[AspectTags], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(ToString::to_string))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<AspectTags>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(D::Error::custom))
            .collect()
    }
}

/// A filled-in model instruction and its target output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedInstruction {
    pub instruction_text: String,
    pub target_output: String,
    pub aspects: AspectTags,
    pub template_id: String,
    pub strategy_tag: StrategyTag,
    pub slot_provenance: std::collections::BTreeMap<SlotName, SourceTag>,
    /// The slot texts used, kept so that instances can be transformed later.
    #[serde(skip)]
    pub slot_values: std::collections::BTreeMap<SlotName, String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("bad aspect triple {0:?}, expected e.g. P1-I0-T3")]
    BadAspects(String),
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("malformed template body: {0}")]
    MalformedBody(String),
    #[error("template {id} does not support {aspects}")]
    UnsupportedAspects { id: String, aspects: AspectTags },
    #[error("template {id}: {reason}")]
    Inconsistent { id: String, reason: String },
    #[error("template data checksum mismatch: expected {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("template data: {0}")]
    Data(String),
    #[error("no template for scenario {0}")]
    NoTemplate(AspectTags),
    #[error("unknown template id {0}")]
    UnknownTemplate(String),
    #[error("missing slot {0}")]
    MissingSlot(SlotName),
    #[error("unexpected slot {0}")]
    UnexpectedSlot(SlotName),
    #[error("empty slot {0}")]
    EmptySlot(SlotName),
    #[error("target does not fit schema {0:?}")]
    TargetMismatch(TargetSchema),
    #[error("empty target output")]
    EmptyTarget,
    #[error("empty item list")]
    EmptyItemList,
    #[error("empty history")]
    EmptyHistory,
    #[error("unknown item {0} in history")]
    UnknownItem(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aspect_tags_parse_and_display() {
        let a: AspectTags = "P1-I0-T3".parse().unwrap();
        assert_eq!(
            a,
            AspectTags::new(Preference::Implicit, Intention::None, TaskForm::Reranking)
        );
        assert_eq!(a.to_string(), "P1-I0-T3");
        assert!("P3-I0-T3".parse::<AspectTags>().is_err());
        assert!("P1-I0".parse::<AspectTags>().is_err());
    }

    #[test]
    fn aspect_tags_serialize_as_short_codes() {
        let a: AspectTags = "P2-I1-T0".parse().unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"p":"P2","i":"I1","t":"T0"}"#);
    }

    #[test]
    fn pairwise_is_constructible() {
        let a: AspectTags = "P1-I1-T1".parse().unwrap();
        assert_eq!(a.task_form, TaskForm::Pairwise);
    }
}
