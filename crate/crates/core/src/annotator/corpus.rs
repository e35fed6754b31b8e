use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transforms::{build_cot_instance, build_relatedness_pair};
use super::{Annotator, AnnotatorError, AnnotatorStats, SlotSource, TeacherRequest};
use crate::catalog::{Catalog, LeaveOneOutSplit, SplitPart};
use crate::digest::{derive_seed, rng_for};
use crate::matcher::sample_uniform_pool;
use crate::templates::{
    compose_inferred, instantiate, render_item_list, AspectTags, CoarseTemplate, Intention, Registry,
    RenderedInstruction, SlotName, SlotText, SlotValues, SourceTag, StrategyTag, Target, TargetSchema,
    TaskForm,
};

/// Source data an instance was built from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub slots: BTreeMap<SlotName, SourceTag>,
    pub target_item: String,
    pub target_title: String,
    /// History titles, oldest first.
    #[serde(default)]
    pub history: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<String>,
}

/// One corpus row.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionInstance {
    pub seq: u64,
    pub rendered: RenderedInstruction,
    pub user_id: String,
    pub scenario_id: String,
    pub split: SplitPart,
    pub provenance: Provenance,
    /// Every slot text known when the instance was built, including those
    /// not shown in the instruction. Not serialized.
    pub slot_pool: BTreeMap<SlotName, SlotText>,
}

#[derive(Serialize, Deserialize)]
struct CorpusRow {
    seq: u64,
    instruction: String,
    output: String,
    aspects: AspectTags,
    template_id: String,
    strategy: StrategyTag,
    scenario: String,
    user: String,
    split: SplitPart,
    provenance: Provenance,
}

impl Serialize for InstructionInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut provenance = self.provenance.clone();
        provenance.slots = self.rendered.slot_provenance.clone();
        CorpusRow {
            seq: self.seq,
            instruction: self.rendered.instruction_text.clone(),
            output: self.rendered.target_output.clone(),
            aspects: self.rendered.aspects,
            template_id: self.rendered.template_id.clone(),
            strategy: self.rendered.strategy_tag,
            scenario: self.scenario_id.clone(),
            user: self.user_id.clone(),
            split: self.split,
            provenance,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InstructionInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let row = CorpusRow::deserialize(d)?;
        Ok(InstructionInstance {
            seq: row.seq,
            rendered: RenderedInstruction {
                instruction_text: row.instruction,
                target_output: row.output,
                aspects: row.aspects,
                template_id: row.template_id,
                strategy_tag: row.strategy,
                slot_provenance: row.provenance.slots.clone(),
                slot_values: BTreeMap::new(),
            },
            user_id: row.user,
            scenario_id: row.scenario,
            split: row.split,
            provenance: row.provenance,
            slot_pool: BTreeMap::new(),
        })
    }
}

/// Whether an instance mainly describes a preference or an intention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineGrainedKind {
    Preference,
    Intention,
}

impl FineGrainedKind {
    pub fn of(aspects: AspectTags) -> Self {
        if aspects.intention == Intention::None {
            FineGrainedKind::Preference
        } else {
            FineGrainedKind::Intention
        }
    }
}

impl InstructionInstance {
    pub fn kind(&self) -> FineGrainedKind {
        FineGrainedKind::of(self.rendered.aspects)
    }
}

/// Identity of the instance being built, shared by the builders.
#[derive(Debug, Clone)]
pub struct InstanceMeta {
    pub user_id: String,
    pub scenario_id: String,
    pub split: SplitPart,
    pub provenance: Provenance,
}

impl InstanceMeta {
    pub fn instance(
        &self,
        rendered: RenderedInstruction,
        slot_pool: BTreeMap<SlotName, SlotText>,
    ) -> InstructionInstance {
        let mut provenance = self.provenance.clone();
        provenance.slots = rendered.slot_provenance.clone();
        InstructionInstance {
            seq: 0,
            rendered,
            user_id: self.user_id.clone(),
            scenario_id: self.scenario_id.clone(),
            split: self.split,
            provenance,
            slot_pool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub aspects: AspectTags,
    #[serde(default)]
    pub strategy: Option<StrategyTag>,
    pub quota: usize,
    #[serde(default)]
    pub id: Option<String>,
}

impl ScenarioSpec {
    pub fn scenario_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        match self.strategy {
            None => self.aspects.to_string(),
            Some(s) => format!(
                "{}:{}",
                self.aspects,
                serde_json::to_value(s)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusPurpose {
    #[default]
    Training,
    Evaluation,
}

fn default_negatives() -> usize {
    crate::matcher::DEFAULT_NEGATIVES
}

fn default_part() -> SplitPart {
    SplitPart::Train
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub seed: u64,
    pub scenarios: Vec<ScenarioSpec>,
    /// Which split part the instances are drawn from.
    #[serde(default = "default_part")]
    pub part: SplitPart,
    #[serde(default)]
    pub purpose: CorpusPurpose,
    /// Negatives listed next to the target in reranking instructions.
    #[serde(default = "default_negatives")]
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub per_kind: BTreeMap<FineGrainedKind, usize>,
    pub mean_instruction_words: f64,
    pub per_template: BTreeMap<String, usize>,
    pub per_scenario: BTreeMap<String, usize>,
    pub skipped: usize,
    pub teacher: AnnotatorStats,
}

impl CorpusStats {
    fn from_instances(instances: &[InstructionInstance], skipped: usize, teacher: AnnotatorStats) -> Self {
        let mut stats = CorpusStats {
            instances: instances.len(),
            skipped,
            teacher,
            ..Default::default()
        };
        stats.per_kind.insert(FineGrainedKind::Preference, 0);
        stats.per_kind.insert(FineGrainedKind::Intention, 0);
        let mut words = 0usize;
        for inst in instances {
            *stats.per_kind.entry(inst.kind()).or_default() += 1;
            *stats
                .per_template
                .entry(inst.rendered.template_id.clone())
                .or_default() += 1;
            *stats.per_scenario.entry(inst.scenario_id.clone()).or_default() += 1;
            words += inst.rendered.instruction_text.split_whitespace().count();
        }
        if !instances.is_empty() {
            stats.mean_instruction_words = words as f64 / instances.len() as f64;
        }
        stats
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row =
            |f: &mut fmt::Formatter<'_>, label: &str, value: String| writeln!(f, "{label:<40}{value:>12}");
        row(f, "fine-grained instructions", self.instances.to_string())?;
        row(
            f,
            "  preference-describing",
            self.per_kind
                .get(&FineGrainedKind::Preference)
                .copied()
                .unwrap_or(0)
                .to_string(),
        )?;
        row(
            f,
            "  intention-describing",
            self.per_kind
                .get(&FineGrainedKind::Intention)
                .copied()
                .unwrap_or(0)
                .to_string(),
        )?;
        row(
            f,
            "coarse-grained templates used",
            self.per_template.len().to_string(),
        )?;
        row(
            f,
            "ave. instruction length (words)",
            format!("{:.1}", self.mean_instruction_words),
        )?;
        row(f, "skipped instances", self.skipped.to_string())?;
        row(f, "teacher calls", self.teacher.upstream_calls.to_string())?;
        row(f, "teacher cache hits", self.teacher.cache_hits.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub instances: Vec<InstructionInstance>,
    pub stats: CorpusStats,
    pub purpose: CorpusPurpose,
    /// Generation stopped early because the teacher budget ran out.
    pub partial: bool,
}

/// Sidecar metadata written next to a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub purpose: CorpusPurpose,
    pub partial: bool,
    pub seed: u64,
    pub prompt_version: String,
    pub teacher: String,
    pub template_checksum: String,
    pub input_digest: String,
    pub stats: CorpusStats,
}

/// Needs of one template beyond its visible slots.
fn needed_slots(template: &CoarseTemplate) -> Result<Vec<SlotName>, AnnotatorError> {
    let mut slots: Vec<SlotName> = template.placeholders()?.into_iter().collect();
    slots.extend(template.inferred_slots()?);
    match template.strategy_tag {
        StrategyTag::Cot => slots.push(SlotName::ExplicitPreference),
        StrategyTag::Relatedness => {
            slots.extend([SlotName::HistoricalInteractions, SlotName::VagueIntention])
        }
        _ => {}
    }
    slots.sort();
    slots.dedup();
    Ok(slots)
}

fn teacher_requests(
    template: &CoarseTemplate,
    source: &SlotSource<'_>,
) -> Result<Vec<TeacherRequest>, AnnotatorError> {
    let mut out = Vec::new();
    for slot in needed_slots(template)? {
        let req = match slot {
            SlotName::ExplicitPreference => source.explicit_preference_request(),
            SlotName::VagueIntention => source.vague_intention_request(),
            _ => continue,
        };
        if let Ok(r) = req {
            out.push(r);
        }
    }
    Ok(out)
}

pub(crate) fn meta_for(source: &SlotSource<'_>, scenario_id: &str) -> Result<InstanceMeta, AnnotatorError> {
    let target = source.target_item()?;
    let history = source
        .history_ids()
        .into_iter()
        .map(|id| {
            source
                .catalog
                .item(id)
                .map(|i| i.title.clone())
                .unwrap_or_default()
        })
        .collect();
    Ok(InstanceMeta {
        user_id: source.user.user_id.clone(),
        scenario_id: scenario_id.to_string(),
        split: source.part,
        provenance: Provenance {
            slots: BTreeMap::new(),
            target_item: target.item_id.clone(),
            target_title: target.title.clone(),
            history,
            review: source.target_event().review_text.clone(),
        },
    })
}

/// Resolve a slot that comes from the user's data or the teacher.
pub(crate) fn user_slot(source: &SlotSource<'_>, slot: SlotName) -> Result<SlotText, AnnotatorError> {
    match slot {
        SlotName::HistoricalInteractions => source.implicit_preference(),
        SlotName::ExplicitPreference => source.explicit_preference(),
        SlotName::VagueIntention => source.vague_intention(),
        SlotName::SpecificIntention => source.specific_intention(),
        SlotName::TargetItem => Ok(SlotText::new(
            source.target_item()?.title.clone(),
            SourceTag::FromTargetItem,
        )),
        SlotName::CandidateItems => Err(AnnotatorError::Precondition(
            "candidate lists come from a pool".into(),
        )),
    }
}

/// Build a plain or task-reversal instance from `template`.
fn build_generic(
    template: &CoarseTemplate,
    source: &SlotSource<'_>,
    meta: &InstanceMeta,
    negatives: usize,
    seed: u64,
) -> Result<InstructionInstance, AnnotatorError> {
    let target = source.target_item()?;
    let history_ids = source.history_ids();
    let mut pool: BTreeMap<SlotName, SlotText> = BTreeMap::new();
    let mut slots = SlotValues::new();
    let mut answer = true;
    for slot in template.placeholders()? {
        let value = match slot {
            SlotName::CandidateItems => {
                let p = sample_uniform_pool(source.catalog, &history_ids, &target.item_id, negatives, seed)?;
                let mut ids = p.items();
                ids.shuffle(&mut rng_for(seed, &["candidate-order"]));
                let items = ids.iter().filter_map(|id| source.catalog.item(id));
                SlotText::new(render_item_list(items)?, SourceTag::FromCandidateSampler)
            }
            SlotName::TargetItem if template.aspects.task_form == TaskForm::Pointwise => {
                let mut rng = rng_for(seed, &["pointwise-answer"]);
                answer = rng.gen_bool(0.5);
                if answer {
                    SlotText::new(target.title.clone(), SourceTag::FromTargetItem)
                } else {
                    let p = sample_uniform_pool(source.catalog, &history_ids, &target.item_id, 1, seed)?;
                    let neg = source.catalog.item(&p.negatives[0]).expect("pool items exist");
                    SlotText::new(neg.title.clone(), SourceTag::FromCandidateSampler)
                }
            }
            other => user_slot(source, other)?,
        };
        slots.insert(slot, value.clone());
        pool.insert(slot, value);
    }
    // The pool always names the true target, even when a pointwise
    // instruction shows a negative.
    pool.insert(
        SlotName::TargetItem,
        SlotText::new(target.title.clone(), SourceTag::FromTargetItem),
    );

    let goal = match template.target_schema {
        TargetSchema::TargetItemTitle => Target::Text(target.title.clone()),
        TargetSchema::YesNo => Target::Answer(answer),
        TargetSchema::ReasoningThenItem => {
            return Err(AnnotatorError::Precondition(
                "reasoning targets use the CoT builder".into(),
            ))
        }
        TargetSchema::FreeTextInference => {
            let mut values = BTreeMap::new();
            for slot in template.inferred_slots()? {
                let v = match pool.get(&slot) {
                    Some(v) => v.clone(),
                    None => user_slot(source, slot)?,
                };
                values.insert(slot, v.text.clone());
                pool.insert(slot, v);
            }
            Target::Text(compose_inferred(template, &values)?)
        }
    };
    let rendered = instantiate(template, &slots, goal)?;
    Ok(meta.instance(rendered, pool))
}

fn build_attempt(
    registry: &Registry,
    template: &CoarseTemplate,
    source: &SlotSource<'_>,
    scenario_id: &str,
    negatives: usize,
    seed: u64,
) -> Result<Vec<InstructionInstance>, AnnotatorError> {
    let meta = meta_for(source, scenario_id)?;
    let target = SlotText::new(meta.provenance.target_title.clone(), SourceTag::FromTargetItem);
    match template.strategy_tag {
        StrategyTag::Cot => {
            let history = source.implicit_preference()?;
            let pref = source.explicit_preference()?;
            Ok(vec![build_cot_instance(
                registry,
                &history,
                Some(&pref),
                &target,
                &meta,
            )?])
        }
        StrategyTag::Relatedness => {
            let history = source.implicit_preference()?;
            let intention = source.vague_intention().ok();
            let pair = build_relatedness_pair(registry, Some(&history), intention.as_ref(), &target, &meta)?;
            Ok(pair.into())
        }
        _ => Ok(vec![build_generic(template, source, &meta, negatives, seed)?]),
    }
}

/// Draw instances for every configured scenario.
///
/// Users are visited in a seeded order per scenario; an attempt that cannot
/// be built (missing review, teacher failure, ...) is skipped and the next
/// user is tried, so each scenario fills its quota unless it runs out of
/// attempts. Teacher requests are prefetched concurrently, then instances
/// are assembled sequentially from the cache, so concurrency never changes
/// the output.
pub fn generate_corpus(
    config: &GenerationConfig,
    catalog: &Catalog,
    split: &LeaveOneOutSplit,
    registry: &Registry,
    annotator: &Annotator<'_>,
) -> Result<Corpus, AnnotatorError> {
    if config.purpose == CorpusPurpose::Training && config.part == SplitPart::Test {
        return Err(AnnotatorError::Config(
            "a training corpus cannot be drawn from the test part".into(),
        ));
    }
    if split.users.is_empty() {
        return Err(AnnotatorError::Precondition("split has no users".into()));
    }
    let mut instances = Vec::new();
    let mut skipped = 0usize;
    let mut partial = false;

    'scenarios: for spec in &config.scenarios {
        let sid = spec.scenario_id();
        // Relatedness emits pairs spanning two aspect triples, so it only
        // runs when asked for by name.
        let mut templates = registry.select(spec.aspects, spec.strategy)?;
        if spec.strategy.is_none() {
            templates.retain(|t| t.strategy_tag != StrategyTag::Relatedness);
        }
        if templates.is_empty() {
            return Err(AnnotatorError::Template(
                crate::templates::TemplateError::NoTemplate(spec.aspects),
            ));
        }
        let mut order: Vec<usize> = (0..split.users.len()).collect();
        order.shuffle(&mut rng_for(config.seed, &["corpus-users", &sid]));
        let max_attempts = 2 * spec.quota + split.users.len();
        let plan: Vec<(usize, usize, u64)> = (0..max_attempts)
            .map(|k| {
                let seed = derive_seed(config.seed, &["corpus-attempt", &sid, &k.to_string()]);
                let template = (seed % templates.len() as u64) as usize;
                (order[k % order.len()], template, seed)
            })
            .collect();
        let source = |user: usize| SlotSource {
            catalog,
            annotator: Some(annotator),
            user: &split.users[user],
            part: config.part,
        };

        let mut requests = Vec::new();
        for &(user, t, _) in plan.iter().take(spec.quota) {
            requests.extend(teacher_requests(&templates[t], &source(user))?);
        }
        if let Err(AnnotatorError::BudgetExhausted) = annotator.prefetch(&requests) {
            log::warn!("teacher budget exhausted during prefetch");
        }

        let mut produced = Vec::new();
        for &(user, t, seed) in &plan {
            if produced.len() >= spec.quota {
                break;
            }
            match build_attempt(
                registry,
                &templates[t],
                &source(user),
                &sid,
                config.negatives,
                seed,
            ) {
                Ok(mut built) => produced.append(&mut built),
                Err(AnnotatorError::BudgetExhausted) => {
                    partial = true;
                    instances.append(&mut produced);
                    break 'scenarios;
                }
                Err(e) if e.is_skip() => {
                    log::debug!("scenario {sid}: skipped user {}: {e}", split.users[user].user_id);
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        produced.truncate(spec.quota);
        if produced.len() < spec.quota {
            log::warn!(
                "scenario {sid}: only {} of {} instances",
                produced.len(),
                spec.quota
            );
        }
        instances.append(&mut produced);
    }

    for (i, inst) in instances.iter_mut().enumerate() {
        inst.seq = i as u64;
    }
    let stats = CorpusStats::from_instances(&instances, skipped, annotator.stats());
    Ok(Corpus {
        instances,
        stats,
        purpose: config.purpose,
        partial,
    })
}

/// Write corpus rows as line-delimited JSON.
pub fn write_corpus<W: Write>(w: &mut W, corpus: &Corpus) -> Result<(), AnnotatorError> {
    let io = |e: std::io::Error| AnnotatorError::Io(e.to_string());
    for inst in &corpus.instances {
        if corpus.purpose == CorpusPurpose::Training && inst.split == SplitPart::Test {
            return Err(AnnotatorError::Config(format!(
                "test instance {} in a training corpus",
                inst.seq
            )));
        }
        serde_json::to_writer(&mut *w, inst).map_err(|e| AnnotatorError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<InstructionInstance>, AnnotatorError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| AnnotatorError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| AnnotatorError::Io(format!("corpus line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
