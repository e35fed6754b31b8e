use std::collections::BTreeMap;

use super::corpus::{InstanceMeta, InstructionInstance};
use super::AnnotatorError;
use crate::templates::{
    compose_inferred, instantiate, AspectTags, CoarseTemplate, Registry, SlotName, SlotText, SlotValues,
    StrategyTag, Target, TargetSchema,
};

fn aspects(code: &str) -> AspectTags {
    code.parse().expect("valid aspect code")
}

fn first_template(
    registry: &Registry,
    aspects: AspectTags,
    strategy: StrategyTag,
) -> Result<CoarseTemplate, AnnotatorError> {
    Ok(registry.select(aspects, Some(strategy))?.remove(0))
}

/// Fill `template` from `pool`, deriving the target from its schema.
fn fill_from_pool(
    template: &CoarseTemplate,
    pool: &BTreeMap<SlotName, SlotText>,
) -> Result<crate::templates::RenderedInstruction, AnnotatorError> {
    let lookup = |slot: SlotName| {
        pool.get(&slot).cloned().ok_or_else(|| {
            AnnotatorError::NotReversible(format!(
                "{} needs {} which the instance lacks",
                template.template_id,
                slot.as_str()
            ))
        })
    };
    let mut slots = SlotValues::new();
    for slot in template.placeholders()? {
        slots.insert(slot, lookup(slot)?);
    }
    let target = match template.target_schema {
        TargetSchema::TargetItemTitle => Target::Text(lookup(SlotName::TargetItem)?.text),
        TargetSchema::FreeTextInference => {
            let mut values = BTreeMap::new();
            for slot in template.inferred_slots()? {
                values.insert(slot, lookup(slot)?.text);
            }
            Target::Text(compose_inferred(template, &values)?)
        }
        other => {
            return Err(AnnotatorError::NotReversible(format!(
                "{} has a {other:?} target",
                template.template_id
            )))
        }
    };
    Ok(instantiate(template, &slots, target)?)
}

/// Swap the input and output roles of an instance using its template's
/// registered counterpart.
pub fn apply_task_reversal(
    registry: &Registry,
    instance: &InstructionInstance,
) -> Result<InstructionInstance, AnnotatorError> {
    let id = &instance.rendered.template_id;
    if instance.rendered.strategy_tag == StrategyTag::Cot {
        return Err(AnnotatorError::NotReversible(format!(
            "{id} is a reasoning template"
        )));
    }
    let source = registry
        .get(id)
        .ok_or_else(|| AnnotatorError::NotReversible(format!("unknown template {id}")))?;
    let reverse_id = source
        .reverse
        .as_deref()
        .ok_or_else(|| AnnotatorError::NotReversible(format!("{id} has no counterpart")))?;
    let reverse = registry
        .get(reverse_id)
        .ok_or_else(|| AnnotatorError::NotReversible(format!("unknown template {reverse_id}")))?;
    let target_aspects = if reverse.supports(instance.rendered.aspects) {
        instance.rendered.aspects
    } else {
        reverse.aspects
    };
    let reverse = reverse.specialize(target_aspects)?;
    let rendered = fill_from_pool(&reverse, &instance.slot_pool)?;
    let meta = InstanceMeta {
        user_id: instance.user_id.clone(),
        scenario_id: instance.scenario_id.clone(),
        split: instance.split,
        provenance: instance.provenance.clone(),
    };
    Ok(meta.instance(rendered, instance.slot_pool.clone()))
}

/// Two instances conditioning on opposite sides of the same interaction:
/// intention and choice to history, and history to intention and choice.
pub fn build_relatedness_pair(
    registry: &Registry,
    history: Option<&SlotText>,
    intention: Option<&SlotText>,
    target: &SlotText,
    meta: &InstanceMeta,
) -> Result<[InstructionInstance; 2], AnnotatorError> {
    let history = history.ok_or_else(|| AnnotatorError::Skipped("no history".into()))?;
    let intention = intention.ok_or_else(|| AnnotatorError::Skipped("no intention".into()))?;
    let mut pool = BTreeMap::new();
    pool.insert(SlotName::HistoricalInteractions, history.clone());
    pool.insert(SlotName::VagueIntention, intention.clone());
    pool.insert(SlotName::TargetItem, target.clone());

    let to_history = first_template(registry, aspects("P0-I1-T2"), StrategyTag::Relatedness)?;
    let to_intention = first_template(registry, aspects("P1-I1-T2"), StrategyTag::Relatedness)?;
    let a = fill_from_pool(&to_history, &pool)?;
    let b = fill_from_pool(&to_intention, &pool)?;
    Ok([meta.instance(a, pool.clone()), meta.instance(b, pool)])
}

/// Instance whose answer spells out the inferred preference before naming
/// the recommended item.
pub fn build_cot_instance(
    registry: &Registry,
    history: &SlotText,
    preference: Option<&SlotText>,
    target: &SlotText,
    meta: &InstanceMeta,
) -> Result<InstructionInstance, AnnotatorError> {
    let preference = preference.ok_or_else(|| AnnotatorError::Skipped("no explicit preference".into()))?;
    let template = first_template(registry, aspects("P1-I0-T2"), StrategyTag::Cot)?;
    let mut slots = SlotValues::new();
    slots.insert(SlotName::HistoricalInteractions, history.clone());
    let rendered = instantiate(
        &template,
        &slots,
        Target::Reasoning {
            preference: preference.text.clone(),
            item_title: target.text.clone(),
        },
    )?;
    assert!(
        rendered.target_output.contains(target.text.trim()),
        "reasoning target must name the item"
    );
    let mut pool = slots;
    pool.insert(SlotName::ExplicitPreference, preference.clone());
    pool.insert(SlotName::TargetItem, target.clone());
    Ok(meta.instance(rendered, pool))
}
