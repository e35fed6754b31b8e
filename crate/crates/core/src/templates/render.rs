use std::collections::BTreeMap;

use super::body::{self, Piece};
use super::{CoarseTemplate, RenderedInstruction, SlotName, SourceTag, TargetSchema, TemplateError};
use crate::catalog::{Catalog, Event, ItemRecord, UserSequence};

/// Text for one slot plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotText {
    pub text: String,
    pub source: SourceTag,
}

impl SlotText {
    pub fn new(text: impl Into<String>, source: SourceTag) -> Self {
        SlotText {
            text: text.into(),
            source,
        }
    }
}

pub type SlotValues = BTreeMap<SlotName, SlotText>;

/// The expected output, checked against the template's target schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Item title or free text, used verbatim.
    Text(String),
    /// Pointwise answer, rendered as `Yes` or `No`.
    Answer(bool),
    /// Reasoning followed by the recommended item.
    Reasoning { preference: String, item_title: String },
}

/// Slot text may not reintroduce placeholder syntax.
fn sanitize(text: &str) -> String {
    text.replace('{', "(").replace('}', ")")
}

/// Collapse embedded line breaks to single spaces.
fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fill every placeholder of `template` and attach the target output.
///
/// Unspecialized templates are rendered under their own `aspects`.
pub fn instantiate(
    template: &CoarseTemplate,
    slots: &SlotValues,
    target: Target,
) -> Result<RenderedInstruction, TemplateError> {
    let pieces = body::resolve(&template.segments()?, template.aspects).ok_or_else(|| {
        TemplateError::UnsupportedAspects {
            id: template.template_id.clone(),
            aspects: template.aspects,
        }
    })?;
    let required = body::piece_slots(&pieces);
    for slot in &required {
        let value = slots.get(slot).ok_or(TemplateError::MissingSlot(*slot))?;
        if value.text.trim().is_empty() {
            return Err(TemplateError::EmptySlot(*slot));
        }
    }
    if let Some(extra) = slots.keys().find(|s| !required.contains(s)) {
        return Err(TemplateError::UnexpectedSlot(*extra));
    }

    let mut instruction_text = String::new();
    for piece in &pieces {
        match piece {
            Piece::Text(t) => {
                // A slot value that already ends a sentence absorbs the
                // template's period.
                let t = match t.strip_prefix('.') {
                    Some(rest) if instruction_text.ends_with(['.', '!', '?']) => rest,
                    _ => t,
                };
                instruction_text.push_str(t)
            }
            Piece::Slot(s) => instruction_text.push_str(&sanitize(slots[s].text.trim())),
        }
    }

    let target_output = match (template.target_schema, target) {
        (TargetSchema::YesNo, Target::Answer(yes)) => if yes { "Yes" } else { "No" }.to_string(),
        (TargetSchema::YesNo, Target::Text(t)) if t == "Yes" || t == "No" => t,
        (
            TargetSchema::ReasoningThenItem,
            Target::Reasoning {
                preference,
                item_title,
            },
        ) => cot_response(&preference, &item_title),
        (TargetSchema::TargetItemTitle | TargetSchema::FreeTextInference, Target::Text(t)) => t,
        (schema, _) => return Err(TemplateError::TargetMismatch(schema)),
    };
    if target_output.trim().is_empty() {
        return Err(TemplateError::EmptyTarget);
    }

    Ok(RenderedInstruction {
        instruction_text,
        target_output,
        aspects: template.aspects,
        template_id: template.template_id.clone(),
        strategy_tag: template.strategy_tag,
        slot_provenance: slots.iter().map(|(k, v)| (*k, v.source)).collect(),
        slot_values: slots
            .iter()
            .map(|(k, v)| (*k, v.text.trim().to_string()))
            .collect(),
    })
}

/// Reasoning-then-item response for chain-of-thought templates.
pub fn cot_response(preference: &str, item_title: &str) -> String {
    let preference = preference.trim().trim_end_matches('.');
    format!(
        "According to the user's historical interactions, we can infer his {preference}. \
         Finally, we recommend him {}.",
        item_title.trim()
    )
}

fn inferred_label(slot: SlotName) -> &'static str {
    match slot {
        SlotName::HistoricalInteractions => "Historical interactions",
        SlotName::ExplicitPreference => "Preference",
        SlotName::VagueIntention | SlotName::SpecificIntention => "Query",
        SlotName::CandidateItems => "Candidates",
        SlotName::TargetItem => "Item",
    }
}

/// Build the free-text target of an inference template from slot texts.
/// A single inferred slot is returned as is; several become labelled lines.
pub fn compose_inferred(
    template: &CoarseTemplate,
    values: &BTreeMap<SlotName, String>,
) -> Result<String, TemplateError> {
    let slots = template.inferred_slots()?;
    let texts = slots
        .iter()
        .map(|s| match values.get(s) {
            Some(t) if !t.trim().is_empty() => Ok(t.trim()),
            Some(_) => Err(TemplateError::EmptySlot(*s)),
            None => Err(TemplateError::MissingSlot(*s)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    match texts.as_slice() {
        [] => Err(TemplateError::EmptyTarget),
        [only] => Ok(only.to_string()),
        _ => Ok(slots
            .iter()
            .zip(texts)
            .map(|(s, t)| format!("{}: {t}", inferred_label(*s)))
            .collect::<Vec<_>>()
            .join("\n")),
    }
}

/// Numbered candidate lines, `1. <title>` up to `N. <title>`.
pub fn render_item_list<'a>(
    items: impl IntoIterator<Item = &'a ItemRecord>,
) -> Result<String, TemplateError> {
    let lines: Vec<String> = items
        .into_iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}", i + 1, one_line(&item.title)))
        .collect();
    if lines.is_empty() {
        return Err(TemplateError::EmptyItemList);
    }
    Ok(lines.join("\n"))
}

/// Arrow-joined numbered titles of `events`, oldest first.
pub fn render_events<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    catalog: &Catalog,
) -> Result<String, TemplateError> {
    let mut parts = Vec::new();
    for (i, event) in events.into_iter().enumerate() {
        let item = catalog
            .item(&event.item_id)
            .ok_or_else(|| TemplateError::UnknownItem(event.item_id.clone()))?;
        parts.push(format!("{}. {}", i + 1, one_line(&item.title)));
    }
    if parts.is_empty() {
        return Err(TemplateError::EmptyHistory);
    }
    Ok(parts.join(" → "))
}

pub fn render_history(sequence: &UserSequence, catalog: &Catalog) -> Result<String, TemplateError> {
    render_events(&sequence.events, catalog)
}
