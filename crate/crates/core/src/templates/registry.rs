use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::body::{self, mentioned_slots, parse_body, piece_slots, pieces_to_body, SlotChoice};
use super::{
    AspectTags, CoarseTemplate, Intention, Preference, SlotName, StrategyTag, TargetSchema, TaskForm,
    TemplateError,
};
use crate::digest::sha256_hex;

const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.jsonl");
const BUILTIN_CHECKSUM: &str = include_str!("../../data/templates.sha256");

/// Which group of user needs a template was written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateCategory {
    Preference,
    Intention,
    Combined,
}

impl CoarseTemplate {
    pub fn segments(&self) -> Result<Vec<body::Segment>, TemplateError> {
        parse_body(&self.body)
    }

    pub fn supports(&self, aspects: AspectTags) -> bool {
        self.variants.contains(&aspects)
    }

    /// Resolve alternations and optional groups for one supported triple.
    pub fn specialize(&self, aspects: AspectTags) -> Result<CoarseTemplate, TemplateError> {
        let unsupported = || TemplateError::UnsupportedAspects {
            id: self.template_id.clone(),
            aspects,
        };
        if !self.supports(aspects) {
            return Err(unsupported());
        }
        let pieces = body::resolve(&self.segments()?, aspects).ok_or_else(unsupported)?;
        let inferred = self
            .inferred
            .iter()
            .map(|spec| {
                SlotChoice::parse(spec)?
                    .resolve(aspects)
                    .map(|s| s.as_str().to_string())
                    .ok_or_else(unsupported)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CoarseTemplate {
            aspects,
            variants: vec![aspects],
            body: pieces_to_body(&pieces),
            inferred,
            ..self.clone()
        })
    }

    /// Placeholders of the body as used under the template's own aspects.
    pub fn placeholders(&self) -> Result<BTreeSet<SlotName>, TemplateError> {
        let pieces = body::resolve(&self.segments()?, self.aspects).ok_or_else(|| {
            TemplateError::UnsupportedAspects {
                id: self.template_id.clone(),
                aspects: self.aspects,
            }
        })?;
        Ok(piece_slots(&pieces))
    }

    /// Slots forming a free-text inference target, resolved for the
    /// template's own aspects.
    pub fn inferred_slots(&self) -> Result<Vec<SlotName>, TemplateError> {
        self.inferred
            .iter()
            .map(|spec| {
                SlotChoice::parse(spec)?.resolve(self.aspects).ok_or_else(|| {
                    TemplateError::UnsupportedAspects {
                        id: self.template_id.clone(),
                        aspects: self.aspects,
                    }
                })
            })
            .collect()
    }

    pub fn word_count(&self) -> usize {
        body::word_count(&self.body)
    }

    fn check(&self) -> Result<(), TemplateError> {
        let bad = |reason: String| TemplateError::Inconsistent {
            id: self.template_id.clone(),
            reason,
        };
        if self.variants.first() != Some(&self.aspects) {
            return Err(bad("aspects must be the first variant".into()));
        }
        let all = mentioned_slots(&self.segments()?);
        if all.is_empty() {
            return Err(bad("body has no placeholders".into()));
        }
        if (self.target_schema == TargetSchema::FreeTextInference) == self.inferred.is_empty() {
            return Err(bad(
                "inferred slots must be given exactly for free-text targets".into()
            ));
        }
        for &variant in &self.variants {
            let spec = self.specialize(variant)?;
            let slots = spec.placeholders()?;
            let mut mentioned = slots.clone();
            mentioned.extend(spec.inferred_slots()?);
            let need = |cond: bool, what: &str| {
                if cond {
                    Ok(())
                } else {
                    Err(bad(format!("{variant}: {what}")))
                }
            };
            need(
                variant.task_form != TaskForm::Pairwise,
                "pairwise templates are not shipped",
            )?;
            need(
                variant.task_form != TaskForm::Reranking || slots.contains(&SlotName::CandidateItems),
                "reranking needs {CandidateItems}",
            )?;
            need(
                variant.task_form != TaskForm::Pointwise
                    || (self.target_schema == TargetSchema::YesNo && slots.contains(&SlotName::TargetItem)),
                "pointwise needs a yes/no target and {TargetItem}",
            )?;
            need(
                variant.preference != Preference::Implicit
                    || slots.contains(&SlotName::HistoricalInteractions),
                "implicit preference needs {HistoricalInteractions}",
            )?;
            need(
                variant.preference != Preference::Explicit
                    || mentioned.contains(&SlotName::ExplicitPreference),
                "explicit preference needs {ExplicitPreference}",
            )?;
            need(
                variant.preference != Preference::None || !slots.contains(&SlotName::HistoricalInteractions),
                "no-preference templates cannot show history",
            )?;
            need(
                (variant.intention == Intention::Vague) == mentioned.contains(&SlotName::VagueIntention),
                "vague intention axis and {VagueIntention} disagree",
            )?;
            need(
                (variant.intention == Intention::Specific)
                    == mentioned.contains(&SlotName::SpecificIntention),
                "specific intention axis and {SpecificIntention} disagree",
            )?;
        }
        Ok(())
    }
}

/// The loaded, validated set of coarse templates, ordered by id.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: Vec<CoarseTemplate>,
    checksum: String,
}

impl Registry {
    /// Parse line-delimited template records. When `expected_checksum` is
    /// given the SHA-256 of `data` must match it.
    pub fn from_jsonl(data: &str, expected_checksum: Option<&str>) -> Result<Self, TemplateError> {
        let checksum = sha256_hex(data.as_bytes());
        if let Some(expected) = expected_checksum {
            if expected != checksum {
                return Err(TemplateError::ChecksumMismatch {
                    expected: expected.to_string(),
                    found: checksum,
                });
            }
        }
        let mut templates = Vec::new();
        for (n, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: CoarseTemplate = serde_json::from_str(line)
                .map_err(|e| TemplateError::Data(format!("line {}: {e}", n + 1)))?;
            t.check()?;
            templates.push(t);
        }
        templates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
        for pair in templates.windows(2) {
            if pair[0].template_id == pair[1].template_id {
                return Err(TemplateError::Data(format!(
                    "duplicate template id {}",
                    pair[0].template_id
                )));
            }
        }
        let registry = Registry { templates, checksum };
        for t in &registry.templates {
            if let Some(rev) = &t.reverse {
                if registry.get(rev).is_none() {
                    return Err(TemplateError::Inconsistent {
                        id: t.template_id.clone(),
                        reason: format!("reverse template {rev} does not exist"),
                    });
                }
            }
        }
        Ok(registry)
    }

    pub fn templates(&self) -> &[CoarseTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn get(&self, id: &str) -> Option<&CoarseTemplate> {
        self.templates
            .binary_search_by(|t| t.template_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.templates[i])
    }

    pub fn count_by_category(&self) -> BTreeMap<TemplateCategory, usize> {
        let mut out = BTreeMap::new();
        for t in &self.templates {
            *out.entry(t.category).or_insert(0) += 1;
        }
        out
    }

    /// Mean body length in whitespace-separated words.
    pub fn mean_word_length(&self) -> f64 {
        if self.templates.is_empty() {
            return 0.0;
        }
        let total: usize = self.templates.iter().map(CoarseTemplate::word_count).sum();
        total as f64 / self.templates.len() as f64
    }

    /// Templates supporting `aspects`, specialized to it, in id order.
    pub fn select(
        &self,
        aspects: AspectTags,
        strategy: Option<StrategyTag>,
    ) -> Result<Vec<CoarseTemplate>, TemplateError> {
        let out = self
            .templates
            .iter()
            .filter(|t| t.supports(aspects))
            .filter(|t| strategy.is_none_or(|s| t.strategy_tag == s))
            .map(|t| t.specialize(aspects))
            .collect::<Result<Vec<_>, _>>()?;
        if out.is_empty() {
            return Err(TemplateError::NoTemplate(aspects));
        }
        Ok(out)
    }
}

/// Load the shipped templates, verifying the data file checksum.
pub fn builtin_registry() -> Result<Registry, TemplateError> {
    let expected = BUILTIN_CHECKSUM
        .split_whitespace()
        .next()
        .ok_or_else(|| TemplateError::Data("empty checksum manifest".into()))?;
    Registry::from_jsonl(BUILTIN_TEMPLATES, Some(expected))
}

pub fn select_templates(
    registry: &Registry,
    aspects: AspectTags,
    strategy: Option<StrategyTag>,
) -> Result<Vec<CoarseTemplate>, TemplateError> {
    registry.select(aspects, strategy)
}
