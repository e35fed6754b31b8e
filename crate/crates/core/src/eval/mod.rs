//! Reranking evaluation: instruction assembly, candidate pools, scoring,
//! ranking and HR@K / NDCG@K.

mod assemble;
mod curve;
mod grouped;
mod metrics;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{Annotator, AnnotatorError, SlotSource};
use crate::catalog::{Catalog, ItemRecord, LeaveOneOutSplit, SplitPart, UserSplit};
use crate::digest::{derive_seed, rng_for};
use crate::matcher::{
    retrieve_hard_negatives, sample_large_pool, sample_uniform_pool, CandidatePool, MatcherError, PoolKind,
    RetrieverIndex, DEFAULT_NEGATIVES, LARGE_POOL_NEGATIVES,
};
use crate::scorer::{ScoreError, ScoreMode, Scorer};
use crate::templates::{AspectTags, CoarseTemplate, Registry, TemplateError};

pub use assemble::{is_rankable, Assembler};
pub use curve::{heldout_scenario_run, read_curve, render_curve_svg, write_curve, CurvePoint};
pub use grouped::{grouped_rerank, GROUPS, GROUP_SIZE};
pub use metrics::{hit, ndcg, MetricReport, RankingOutcome, TargetRank, KS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Annotator(#[from] AnnotatorError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("grouped reranking needs a pool of {expected}, got {found}")]
    PoolSize { expected: usize, found: usize },
    #[error("evaluation config: {0}")]
    Config(String),
}

impl EvalError {
    /// Failures that sink the whole run rather than one instance.
    fn is_fatal(&self) -> bool {
        match self {
            EvalError::Annotator(e) => !e.is_skip(),
            EvalError::Config(_) | EvalError::PoolSize { .. } => true,
            _ => false,
        }
    }
}

/// How each instance's candidate pool is built.
#[derive(Debug, Clone, Copy)]
pub enum PoolSource<'a> {
    Uniform {
        negatives: usize,
    },
    Hard {
        index: &'a RetrieverIndex,
        negatives: usize,
    },
    /// 100 uniform candidates, ranked with the grouped procedure.
    Large,
}

impl Default for PoolSource<'_> {
    fn default() -> Self {
        PoolSource::Uniform {
            negatives: DEFAULT_NEGATIVES,
        }
    }
}

impl PoolSource<'_> {
    pub fn kind(&self) -> PoolKind {
        match self {
            PoolSource::Uniform { .. } => PoolKind::UniformRandom,
            PoolSource::Hard { .. } => PoolKind::HardRetrieved,
            PoolSource::Large => PoolKind::LargeUniform,
        }
    }

    pub fn build(
        &self,
        catalog: &Catalog,
        history: &[&str],
        target: &str,
        seed: u64,
    ) -> Result<CandidatePool, MatcherError> {
        match *self {
            PoolSource::Uniform { negatives } => {
                sample_uniform_pool(catalog, history, target, negatives, seed)
            }
            PoolSource::Hard { index, negatives } => {
                retrieve_hard_negatives(index, catalog, history, target, negatives, seed)
            }
            PoolSource::Large => sample_large_pool(catalog, history, target, LARGE_POOL_NEGATIVES, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Largest tolerated share of skipped instances.
    pub skip_threshold: f64,
    /// Users evaluated in parallel. Scorers with internal random state are
    /// only reproducible at 1.
    pub concurrency: usize,
    pub score_mode: ScoreMode,
    /// Evaluate only the first `max_users` users of the split.
    pub max_users: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            skip_threshold: 0.05,
            concurrency: 1,
            score_mode: ScoreMode::Sum,
            max_users: None,
        }
    }
}

/// Everything an evaluation reads besides the scorer.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub catalog: &'a Catalog,
    pub split: &'a LeaveOneOutSplit,
    pub registry: &'a Registry,
    /// Source of teacher-backed slots; must not call a live model.
    pub annotator: Option<&'a Annotator<'a>>,
    pub part: SplitPart,
    pub options: &'a EvalOptions,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        catalog: &'a Catalog,
        split: &'a LeaveOneOutSplit,
        registry: &'a Registry,
        annotator: Option<&'a Annotator<'a>>,
        options: &'a EvalOptions,
    ) -> Result<Self, EvalError> {
        if let Some(a) = annotator {
            if a.teacher().is_live() {
                return Err(EvalError::Config(
                    "evaluation reads teacher slots from fixtures or the cache, not a live model".into(),
                ));
            }
        }
        Ok(EvalContext {
            catalog,
            split,
            registry,
            annotator,
            part: SplitPart::Test,
            options,
        })
    }

    pub fn with_part(mut self, part: SplitPart) -> Self {
        self.part = part;
        self
    }

    fn users(&self) -> &'a [UserSplit] {
        let n = self
            .options
            .max_users
            .unwrap_or(usize::MAX)
            .min(self.split.users.len());
        &self.split.users[..n]
    }
}

/// A scenario to evaluate: an aspect triple and optionally a fixed template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScenario {
    pub aspects: AspectTags,
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

impl EvalScenario {
    pub fn new(aspects: AspectTags) -> Self {
        EvalScenario {
            aspects,
            template_id: None,
            id: None,
        }
    }

    pub fn with_template(mut self, id: &str) -> Self {
        self.template_id = Some(id.to_string());
        self
    }

    pub fn scenario_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.aspects.to_string())
    }
}

/// The evaluation manifest written next to every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub scenario: String,
    pub template_id: String,
    pub scorer: String,
    pub pool_kind: PoolKind,
    pub seed: u64,
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub n: usize,
    pub skipped: usize,
    pub valid: bool,
    pub split: SplitPart,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub outcomes: Vec<RankingOutcome>,
    pub manifest: EvalManifest,
}

impl Evaluation {
    pub fn is_valid(&self) -> bool {
        self.manifest.valid
    }
}

/// Rank `pool` for one user: seeded candidate order, score, sort.
pub fn rank_pool(
    catalog: &Catalog,
    pool: &CandidatePool,
    assembler: &Assembler,
    scorer: &dyn Scorer,
    seed: u64,
) -> Result<TargetRank, EvalError> {
    let mut ids = pool.items();
    ids.shuffle(&mut rng_for(seed, &["candidate-order"]));
    let items = lookup(catalog, &ids)?;
    let target = ids
        .iter()
        .position(|id| *id == pool.target_item_id)
        .expect("pool contains its target");
    let order = assembler.order(scorer, &items, Some(target))?;
    let pos = order
        .iter()
        .position(|&i| i == target)
        .expect("order is a permutation");
    Ok(TargetRank::Ranked(pos + 1))
}

pub(crate) fn lookup<'c>(catalog: &'c Catalog, ids: &[&str]) -> Result<Vec<&'c ItemRecord>, EvalError> {
    ids.iter()
        .map(|id| {
            catalog
                .item(id)
                .ok_or_else(|| TemplateError::UnknownItem(id.to_string()).into())
        })
        .collect()
}

fn evaluate_user(
    ctx: &EvalContext<'_>,
    template: &CoarseTemplate,
    user: &UserSplit,
    scorer: &dyn Scorer,
    pool_source: &PoolSource<'_>,
    seed: u64,
    scenario_id: &str,
) -> Result<RankingOutcome, EvalError> {
    let source = SlotSource {
        catalog: ctx.catalog,
        annotator: ctx.annotator,
        user,
        part: ctx.part,
    };
    let assembler = Assembler::for_user(template, &source, ctx.options.score_mode)?;
    let history = source.history_ids();
    let target = &source.target_event().item_id;
    let user_seed = derive_seed(seed, &["eval", ctx.part.as_str(), &user.user_id]);
    let pool = pool_source.build(ctx.catalog, &history, target, user_seed)?;
    if let PoolSource::Large = pool_source {
        return grouped_rerank(
            &pool,
            ctx.catalog,
            &assembler,
            scorer,
            user_seed,
            scenario_id,
            &user.user_id,
        );
    }
    let rank = rank_pool(ctx.catalog, &pool, &assembler, scorer, user_seed)?;
    Ok(RankingOutcome::new(rank, pool.size(), scenario_id, &user.user_id))
}

/// Resolve the scenario's template, choosing on the validation part when
/// several are eligible and none is fixed.
fn resolve_template(
    ctx: &EvalContext<'_>,
    scenario: &EvalScenario,
    scorer: &dyn Scorer,
    pool: &PoolSource<'_>,
    seed: u64,
) -> Result<CoarseTemplate, EvalError> {
    if let Some(id) = &scenario.template_id {
        let t = ctx
            .registry
            .get(id)
            .ok_or_else(|| EvalError::Config(format!("unknown template {id}")))?;
        let t = t.specialize(scenario.aspects)?;
        if !is_rankable(&t) {
            return Err(EvalError::Config(format!(
                "template {id} does not produce an item"
            )));
        }
        return Ok(t);
    }
    let mut candidates = ctx.registry.select(scenario.aspects, None)?;
    candidates.retain(is_rankable);
    match candidates.len() {
        0 => Err(TemplateError::NoTemplate(scenario.aspects).into()),
        1 => Ok(candidates.remove(0)),
        _ => {
            let id =
                template_selection_on_validation(ctx, scenario.aspects, &candidates, scorer, pool, seed)?;
            Ok(candidates
                .into_iter()
                .find(|t| t.template_id == id)
                .expect("chosen from candidates"))
        }
    }
}

fn run_with_template(
    ctx: &EvalContext<'_>,
    template: &CoarseTemplate,
    scenario_id: &str,
    scorer: &dyn Scorer,
    pool: &PoolSource<'_>,
    seed: u64,
) -> Result<Evaluation, EvalError> {
    let users = ctx.users();
    let eval_one = |u: &UserSplit| evaluate_user(ctx, template, u, scorer, pool, seed, scenario_id);
    let results: Vec<Result<RankingOutcome, EvalError>> = if ctx.options.concurrency <= 1 || users.len() < 2 {
        users.iter().map(eval_one).collect()
    } else {
        let chunk = users.len().div_ceil(ctx.options.concurrency);
        std::thread::scope(|s| {
            let handles: Vec<_> = users
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(eval_one).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        })
    };

    let mut outcomes = Vec::new();
    let mut skipped = 0;
    for (user, r) in users.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                log::debug!("{scenario_id}: skipped {}: {e}", user.user_id);
                skipped += 1;
            }
        }
    }
    let total = outcomes.len() + skipped;
    let valid =
        total > 0 && !outcomes.is_empty() && (skipped as f64) <= ctx.options.skip_threshold * total as f64;
    if !valid {
        log::warn!("{scenario_id}: {skipped} of {total} instances skipped, evaluation invalid");
    }
    let report = MetricReport::from_outcomes(scenario_id, &outcomes);
    let manifest = EvalManifest {
        scenario: scenario_id.to_string(),
        template_id: template.template_id.clone(),
        scorer: scorer.identity(),
        pool_kind: pool.kind(),
        seed,
        metrics: report.metrics(),
        n: outcomes.len(),
        skipped,
        valid,
        split: ctx.part,
        source_dataset: None,
        target_dataset: None,
    };
    Ok(Evaluation {
        report,
        outcomes,
        manifest,
    })
}

/// Evaluate every user of the context's split part under one scenario.
pub fn evaluate_scenario(
    ctx: &EvalContext<'_>,
    scenario: &EvalScenario,
    scorer: &dyn Scorer,
    pool: &PoolSource<'_>,
    seed: u64,
) -> Result<Evaluation, EvalError> {
    let template = resolve_template(ctx, scenario, scorer, pool, seed)?;
    run_with_template(ctx, &template, &scenario.scenario_id(), scorer, pool, seed)
}

/// The candidate with the best validation NDCG@5; ties go to the smaller id.
/// When no candidate evaluates validly the smallest id is returned.
pub fn template_selection_on_validation(
    ctx: &EvalContext<'_>,
    aspects: AspectTags,
    candidates: &[CoarseTemplate],
    scorer: &dyn Scorer,
    pool: &PoolSource<'_>,
    seed: u64,
) -> Result<String, EvalError> {
    if candidates.len() == 1 {
        return Ok(candidates[0].template_id.clone());
    }
    let validation = ctx.with_part(SplitPart::Validation);
    let mut sorted: Vec<&CoarseTemplate> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.template_id.cmp(&b.template_id));
    let mut best: Option<(f64, &str)> = None;
    for t in sorted {
        let e = run_with_template(&validation, t, &aspects.to_string(), scorer, pool, seed)?;
        if !e.is_valid() {
            continue;
        }
        let score = e.report.ndcg_at(5);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, &t.template_id));
        }
    }
    Ok(match best {
        Some((_, id)) => id.to_string(),
        None => {
            log::warn!("{aspects}: no template evaluated validly on validation");
            candidates
                .iter()
                .map(|t| t.template_id.clone())
                .min()
                .expect("non-empty")
        }
    })
}

/// [`evaluate_scenario`] on a second dataset, tagged with both dataset names.
pub fn cross_domain_eval(
    ctx: &EvalContext<'_>,
    scenario: &EvalScenario,
    scorer: &dyn Scorer,
    pool: &PoolSource<'_>,
    seed: u64,
    source_dataset: &str,
) -> Result<Evaluation, EvalError> {
    let mut e = evaluate_scenario(ctx, scenario, scorer, pool, seed)?;
    e.manifest.source_dataset = Some(source_dataset.to_string());
    e.manifest.target_dataset = Some(ctx.catalog.provenance.clone());
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{AnnotationCache, AnnotatorConfig, DeterministicTeacher, PromptSet};
    use crate::scorer::{LexicalScorer, OracleScorer, RandomScorer};
    use crate::synth::{synthetic_dataset, SynthConfig};
    use crate::templates::builtin_registry;

    fn aspects(s: &str) -> AspectTags {
        s.parse().unwrap()
    }

    struct Fixture {
        data: crate::synth::SynthData,
        registry: Registry,
        cache: AnnotationCache,
        prompts: PromptSet,
        options: EvalOptions,
    }

    impl Fixture {
        fn new(users: usize) -> Self {
            Fixture {
                data: synthetic_dataset(&SynthConfig {
                    users,
                    items_per_genre: 20,
                    review_rate: 1.0,
                    ..Default::default()
                }),
                registry: builtin_registry().unwrap(),
                cache: AnnotationCache::in_memory(),
                prompts: PromptSet::builtin(),
                options: EvalOptions::default(),
            }
        }
    }

    fn with_ctx<T>(f: &Fixture, run: impl FnOnce(&EvalContext<'_>) -> T) -> T {
        let annotator = Annotator::new(
            &DeterministicTeacher,
            &f.cache,
            &f.prompts,
            AnnotatorConfig::default(),
        );
        let ctx = EvalContext::new(
            &f.data.catalog,
            &f.data.split,
            &f.registry,
            Some(&annotator),
            &f.options,
        )
        .unwrap();
        run(&ctx)
    }

    #[test]
    fn oracles_give_extreme_metrics_in_every_form() {
        let f = Fixture::new(30);
        for code in [
            "P1-I0-T3", "P1-I0-T2", "P1-I0-T0", "P2-I0-T2", "P0-I1-T2", "P1-I2-T3",
        ] {
            let s = EvalScenario::new(aspects(code));
            with_ctx(&f, |ctx| {
                let e =
                    evaluate_scenario(ctx, &s, &OracleScorer::perfect(), &PoolSource::default(), 3).unwrap();
                assert!(e.is_valid(), "{code}");
                assert_eq!(e.report.hr, [1.0; 3], "{code}");
                assert_eq!(e.report.ndcg, [1.0; 3], "{code}");
                let e =
                    evaluate_scenario(ctx, &s, &OracleScorer::inverse(), &PoolSource::default(), 3).unwrap();
                assert_eq!(e.report.hr, [0.0; 3], "{code}");
                assert!(e.outcomes.iter().all(|o| o.target_rank == TargetRank::Ranked(10)));
            });
        }
    }

    #[test]
    fn manifest_records_the_run() {
        let f = Fixture::new(20);
        let s = EvalScenario::new(aspects("P1-I0-T3")).with_template("pref-07");
        with_ctx(&f, |ctx| {
            let e = evaluate_scenario(ctx, &s, &LexicalScorer, &PoolSource::default(), 9).unwrap();
            let m = &e.manifest;
            assert_eq!(m.template_id, "pref-07");
            assert_eq!(m.scorer, "lexical");
            assert_eq!(m.pool_kind, PoolKind::UniformRandom);
            assert_eq!(m.n + m.skipped, 20);
            let json = serde_json::to_value(m).unwrap();
            for key in [
                "scenario",
                "template_id",
                "scorer",
                "pool_kind",
                "seed",
                "metrics",
                "n",
                "skipped",
            ] {
                assert!(json.get(key).is_some(), "{key}");
            }
            assert_eq!(json["metrics"].as_object().unwrap().len(), 6);
        });
    }

    #[test]
    fn concurrency_does_not_change_deterministic_results() {
        let mut f = Fixture::new(40);
        let s = EvalScenario::new(aspects("P1-I0-T3")).with_template("pref-07");
        let a = with_ctx(&f, |ctx| {
            evaluate_scenario(ctx, &s, &LexicalScorer, &PoolSource::default(), 1).unwrap()
        });
        f.options.concurrency = 4;
        let b = with_ctx(&f, |ctx| {
            evaluate_scenario(ctx, &s, &LexicalScorer, &PoolSource::default(), 1).unwrap()
        });
        assert_eq!(a, b);
    }

    #[test]
    fn template_selection_tie_takes_smaller_id() {
        let f = Fixture::new(15);
        let candidates = f.registry.select(aspects("P1-I0-T3"), None).unwrap();
        assert!(candidates.len() >= 2);
        let chosen = with_ctx(&f, |ctx| {
            template_selection_on_validation(
                ctx,
                aspects("P1-I0-T3"),
                &candidates,
                &OracleScorer::perfect(),
                &PoolSource::default(),
                0,
            )
            .unwrap()
        });
        let smallest = candidates.iter().map(|t| t.template_id.clone()).min().unwrap();
        assert_eq!(chosen, smallest);
        let single = with_ctx(&f, |ctx| {
            template_selection_on_validation(
                ctx,
                aspects("P1-I0-T3"),
                &candidates[1..2],
                &LexicalScorer,
                &PoolSource::default(),
                0,
            )
            .unwrap()
        });
        assert_eq!(single, candidates[1].template_id);
    }

    #[test]
    fn missing_reviews_are_skipped_and_can_invalidate() {
        let mut f = Fixture::new(40);
        for u in &mut f.data.split.users {
            u.test.review_text = None;
        }
        let s = EvalScenario::new(aspects("P0-I1-T2")).with_template("intent-01");
        with_ctx(&f, |ctx| {
            let e = evaluate_scenario(ctx, &s, &RandomScorer::new(1), &PoolSource::default(), 0).unwrap();
            assert_eq!(e.manifest.skipped, 40);
            assert!(!e.is_valid());
        });
    }

    #[test]
    fn cross_domain_manifest_names_both_datasets() {
        let f = Fixture::new(12);
        let s = EvalScenario::new(aspects("P1-I0-T3")).with_template("pref-07");
        with_ctx(&f, |ctx| {
            let e = cross_domain_eval(
                ctx,
                &s,
                &OracleScorer::perfect(),
                &PoolSource::default(),
                0,
                "games",
            )
            .unwrap();
            assert_eq!(e.manifest.source_dataset.as_deref(), Some("games"));
            assert_eq!(e.manifest.target_dataset.as_deref(), Some("synthetic:seed=7"));
            assert_eq!(e.report.hr, [1.0; 3]);
        });
    }

    #[test]
    fn large_pools_use_grouped_reranking() {
        let f = Fixture::new(10);
        let s = EvalScenario::new(aspects("P1-I0-T3")).with_template("pref-07");
        with_ctx(&f, |ctx| {
            let e = evaluate_scenario(ctx, &s, &OracleScorer::perfect(), &PoolSource::Large, 0).unwrap();
            assert_eq!(e.report.hr, [1.0; 3]);
            assert!(e.outcomes.iter().all(|o| o.pool_size == 100));
        });
    }
}
