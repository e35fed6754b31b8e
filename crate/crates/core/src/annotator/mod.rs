//! Fine-grained slot contents, diversity transforms and corpus generation.

mod audit;
mod cache;
mod corpus;
mod prompts;
mod teacher;
mod transforms;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Event, ItemRecord, SplitPart, UserSplit};
use crate::matcher::MatcherError;
use crate::retry::{with_retries, Failure, RetryPolicy};
use crate::templates::{render_events, SlotText, SourceTag, TemplateError};

pub use audit::{aggregate, audit_sample, AuditLine, AuditRow, AuditSheet, AuditSummary, AUDIT_QUESTIONS};
pub use cache::AnnotationCache;
pub(crate) use corpus::user_slot;
pub use corpus::{
    generate_corpus, read_corpus, write_corpus, Corpus, CorpusManifest, CorpusPurpose, CorpusStats,
    FineGrainedKind, GenerationConfig, InstanceMeta, InstructionInstance, Provenance, ScenarioSpec,
};
pub use prompts::{PromptSet, PromptSpec};
#[cfg(feature = "net")]
pub use teacher::HttpTeacher;
pub use teacher::{
    AnnotationTask, CompletionRecord, DeterministicTeacher, FixtureTeacher, GenerationParams, HistoryEntry,
    RecordingTeacher, TeacherClient, TeacherContext, TeacherError, TeacherRequest,
};
pub use transforms::{apply_task_reversal, build_cot_instance, build_relatedness_pair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotatorError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("item {0} has no categories, so no specific intention")]
    SpecificIntentionUnavailable(String),
    #[error("template {0} has no reversed counterpart")]
    NotReversible(String),
    #[error("skipped: {0}")]
    Skipped(String),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error("teacher returned an empty completion")]
    EmptyCompletion,
    #[error("upstream call budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error("io: {0}")]
    Io(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl AnnotatorError {
    /// Errors that drop one instance while generation carries on.
    pub fn is_skip(&self) -> bool {
        !matches!(
            self,
            AnnotatorError::BudgetExhausted | AnnotatorError::Io(_) | AnnotatorError::Config(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub retry: RetryPolicy,
    /// Upper bound on calls to the teacher, counting retries.
    pub max_upstream_calls: Option<usize>,
    /// Teacher calls in flight during prefetch.
    pub concurrency: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            retry: RetryPolicy::default(),
            max_upstream_calls: None,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub upstream_calls: usize,
    pub cache_hits: usize,
    pub failures: usize,
}

/// Teacher access through the cache, with retries and a call budget.
pub struct Annotator<'a> {
    teacher: &'a dyn TeacherClient,
    cache: &'a AnnotationCache,
    prompts: &'a PromptSet,
    config: AnnotatorConfig,
    upstream_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    failures: AtomicUsize,
}

impl<'a> Annotator<'a> {
    pub fn new(
        teacher: &'a dyn TeacherClient,
        cache: &'a AnnotationCache,
        prompts: &'a PromptSet,
        config: AnnotatorConfig,
    ) -> Self {
        Annotator {
            teacher,
            cache,
            prompts,
            config,
            upstream_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        }
    }

    pub fn prompts(&self) -> &PromptSet {
        self.prompts
    }

    pub fn teacher(&self) -> &dyn TeacherClient {
        self.teacher
    }

    pub fn stats(&self) -> AnnotatorStats {
        AnnotatorStats {
            upstream_calls: self.upstream_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            failures: self.failures.load(Ordering::SeqCst),
        }
    }

    fn take_budget(&self) -> Result<(), AnnotatorError> {
        let used = self.upstream_calls.fetch_add(1, Ordering::SeqCst);
        match self.config.max_upstream_calls {
            Some(max) if used >= max => {
                self.upstream_calls.fetch_sub(1, Ordering::SeqCst);
                Err(AnnotatorError::BudgetExhausted)
            }
            _ => Ok(()),
        }
    }

    /// Cached completion for `request`, calling the teacher on a miss.
    ///
    /// Transport failures and rate limits are retried per the policy; an
    /// empty completion is retried once.
    pub fn complete(&self, request: &TeacherRequest) -> Result<String, AnnotatorError> {
        let digest = request.digest();
        if let Some(text) = self.cache.get(&digest) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(text);
        }
        let mut empty_retries = 1;
        let result = with_retries(&self.config.retry, |_| {
            self.take_budget().map_err(Failure::Fatal)?;
            match self.teacher.complete(request) {
                Ok(text) if text.trim().is_empty() => {
                    if empty_retries > 0 {
                        empty_retries -= 1;
                        Err(Failure::Retriable {
                            error: AnnotatorError::EmptyCompletion,
                            retry_after: Some(Duration::ZERO),
                        })
                    } else {
                        Err(Failure::Fatal(AnnotatorError::EmptyCompletion))
                    }
                }
                Ok(text) => Ok(text.trim().to_string()),
                Err(e) if e.is_retriable() => {
                    let retry_after = match e {
                        TeacherError::RateLimited { retry_after } => retry_after,
                        _ => None,
                    };
                    Err(Failure::Retriable {
                        error: AnnotatorError::Teacher(e),
                        retry_after,
                    })
                }
                Err(e) => Err(Failure::Fatal(AnnotatorError::Teacher(e))),
            }
        });
        match result {
            Ok(text) => self
                .cache
                .insert(&digest, &text)
                .map_err(|e| AnnotatorError::Io(e.to_string())),
            Err(e) => {
                if e != AnnotatorError::BudgetExhausted {
                    self.failures.fetch_add(1, Ordering::SeqCst);
                    log::warn!("teacher request {} failed: {e}", &digest[..12]);
                }
                Err(e)
            }
        }
    }

    /// Warm the cache for `requests` with bounded concurrency. Duplicate
    /// requests are issued once. Returns the number of failed requests; a
    /// spent budget stops the prefetch early.
    pub fn prefetch(&self, requests: &[TeacherRequest]) -> Result<usize, AnnotatorError> {
        let mut seen = BTreeSet::new();
        let pending: Vec<&TeacherRequest> = requests
            .iter()
            .filter(|r| {
                let d = r.digest();
                self.cache.get(&d).is_none() && seen.insert(d)
            })
            .collect();
        if pending.is_empty() {
            return Ok(0);
        }
        let workers = self.config.concurrency.max(1).min(pending.len());
        let next = AtomicUsize::new(0);
        let failed = AtomicUsize::new(0);
        let exhausted = std::sync::atomic::AtomicBool::new(false);
        let work = || loop {
            if exhausted.load(Ordering::SeqCst) {
                break;
            }
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(req) = pending.get(i) else { break };
            match self.complete(req) {
                Ok(_) => {}
                Err(AnnotatorError::BudgetExhausted) => exhausted.store(true, Ordering::SeqCst),
                Err(_) => {
                    failed.fetch_add(1, Ordering::SeqCst);
                }
            }
        };
        // One worker runs on the calling thread, which keeps single-threaded
        // targets working.
        if workers == 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(work);
                }
            });
        }
        if exhausted.load(Ordering::SeqCst) {
            return Err(AnnotatorError::BudgetExhausted);
        }
        Ok(failed.load(Ordering::SeqCst))
    }
}

fn history_entries<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    catalog: &Catalog,
) -> Result<Vec<HistoryEntry>, AnnotatorError> {
    let entries = events
        .into_iter()
        .map(|e| {
            catalog
                .item(&e.item_id)
                .map(|item| HistoryEntry {
                    title: item.title.clone(),
                    categories: item.categories.clone(),
                })
                .ok_or_else(|| TemplateError::UnknownItem(e.item_id.clone()).into())
        })
        .collect::<Result<Vec<_>, AnnotatorError>>()?;
    if entries.is_empty() {
        return Err(AnnotatorError::Precondition("empty history".into()));
    }
    Ok(entries)
}

/// The rendered interaction history, as shown for implicit preferences.
pub fn derive_implicit_preference<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    catalog: &Catalog,
) -> Result<SlotText, AnnotatorError> {
    let text = render_events(events, catalog).map_err(|e| match e {
        TemplateError::EmptyHistory => AnnotatorError::Precondition("empty history".into()),
        other => other.into(),
    })?;
    Ok(SlotText::new(text, SourceTag::FromHistory))
}

/// Teacher-written description of the tastes behind a history.
pub fn generate_explicit_preference<'a>(
    annotator: &Annotator<'_>,
    events: impl IntoIterator<Item = &'a Event>,
    catalog: &Catalog,
) -> Result<SlotText, AnnotatorError> {
    let request = annotator
        .prompts
        .preference_request(history_entries(events, catalog)?);
    Ok(SlotText::new(
        annotator.complete(&request)?,
        SourceTag::FromTeacher,
    ))
}

/// Teacher-extracted first-person need behind a review.
pub fn extract_vague_intention(
    annotator: &Annotator<'_>,
    review_text: &str,
) -> Result<SlotText, AnnotatorError> {
    if review_text.trim().is_empty() {
        return Err(AnnotatorError::Precondition("empty review".into()));
    }
    let request = annotator.prompts.intention_request(review_text, false)?;
    Ok(SlotText::new(
        annotator.complete(&request)?,
        SourceTag::FromReview,
    ))
}

/// Category labels joined with `", "` and closed with a period.
pub fn derive_specific_intention(item: &ItemRecord) -> Result<SlotText, AnnotatorError> {
    let labels: Vec<&str> = item
        .categories
        .iter()
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .collect();
    if labels.is_empty() {
        return Err(AnnotatorError::SpecificIntentionUnavailable(item.item_id.clone()));
    }
    Ok(SlotText::new(
        format!("{}.", labels.join(", ")),
        SourceTag::FromCategories,
    ))
}

/// Slot contents for one user and split part. Teacher-backed slots are only
/// available when an annotator is supplied.
pub struct SlotSource<'a> {
    pub catalog: &'a Catalog,
    pub annotator: Option<&'a Annotator<'a>>,
    pub user: &'a UserSplit,
    pub part: SplitPart,
}

impl<'a> SlotSource<'a> {
    pub fn history_events(&self) -> Vec<&'a Event> {
        self.user.history(self.part)
    }

    pub fn history_ids(&self) -> Vec<&'a str> {
        self.history_events()
            .into_iter()
            .map(|e| e.item_id.as_str())
            .collect()
    }

    pub fn target_event(&self) -> &'a Event {
        self.user.target(self.part)
    }

    pub fn target_item(&self) -> Result<&'a ItemRecord, AnnotatorError> {
        let id = &self.target_event().item_id;
        self.catalog
            .item(id)
            .ok_or_else(|| TemplateError::UnknownItem(id.clone()).into())
    }

    fn annotator(&self) -> Result<&'a Annotator<'a>, AnnotatorError> {
        self.annotator
            .ok_or_else(|| AnnotatorError::Skipped("no teacher configured".into()))
    }

    pub fn implicit_preference(&self) -> Result<SlotText, AnnotatorError> {
        derive_implicit_preference(self.history_events(), self.catalog)
    }

    pub fn explicit_preference(&self) -> Result<SlotText, AnnotatorError> {
        generate_explicit_preference(self.annotator()?, self.history_events(), self.catalog)
    }

    pub fn explicit_preference_request(&self) -> Result<TeacherRequest, AnnotatorError> {
        Ok(self
            .annotator()?
            .prompts
            .preference_request(history_entries(self.history_events(), self.catalog)?))
    }

    fn review(&self) -> Result<&'a str, AnnotatorError> {
        self.target_event()
            .review_text
            .as_deref()
            .filter(|r| !r.trim().is_empty())
            .ok_or_else(|| AnnotatorError::Skipped("target has no review".into()))
    }

    pub fn vague_intention(&self) -> Result<SlotText, AnnotatorError> {
        extract_vague_intention(self.annotator()?, self.review()?)
    }

    pub fn vague_intention_request(&self) -> Result<TeacherRequest, AnnotatorError> {
        self.annotator()?.prompts.intention_request(self.review()?, false)
    }

    pub fn specific_intention(&self) -> Result<SlotText, AnnotatorError> {
        derive_specific_intention(self.target_item()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn resident_evil() -> (Catalog, Vec<Event>) {
        let mut c = Catalog::default();
        for (id, title) in [
            ("re2", "Resident Evil: Revelations 2 - PlayStation 4"),
            ("re4", "Resident Evil 4 - PlayStation 4 Standard Edition"),
        ] {
            c.items.insert(
                id.into(),
                ItemRecord::new(id, title, &["Video Games", "PlayStation 4"]),
            );
        }
        let events = ["re2", "re4"]
            .iter()
            .enumerate()
            .map(|(t, id)| Event {
                item_id: id.to_string(),
                timestamp: t as i64,
                review_text: None,
            })
            .collect();
        (c, events)
    }

    #[test]
    fn implicit_preference_renders_arrow_history() {
        let (c, events) = resident_evil();
        let slot = derive_implicit_preference(&events, &c).unwrap();
        assert_eq!(
            slot.text,
            "1. Resident Evil: Revelations 2 - PlayStation 4 → 2. Resident Evil 4 - PlayStation 4 Standard Edition"
        );
        assert_eq!(slot.source, SourceTag::FromHistory);
        assert!(matches!(
            derive_implicit_preference(&[], &c),
            Err(AnnotatorError::Precondition(_))
        ));
    }

    #[test]
    fn twenty_events_have_nineteen_arrows() {
        let mut c = Catalog::default();
        let events: Vec<Event> = (0..20)
            .map(|i| {
                let id = format!("i{i}");
                c.items
                    .insert(id.clone(), ItemRecord::new(&id, format!("T{i}"), &[]));
                Event {
                    item_id: id,
                    timestamp: i,
                    review_text: None,
                }
            })
            .collect();
        let slot = derive_implicit_preference(&events, &c).unwrap();
        assert_eq!(slot.text.matches(" → ").count(), 19);
    }

    #[test]
    fn specific_intention_joins_categories() {
        let item = ItemRecord::new("m", "Mouse", &["Video Games", "PC", "Accessories", "Gaming Mice"]);
        let slot = derive_specific_intention(&item).unwrap();
        assert_eq!(slot.text, "Video Games, PC, Accessories, Gaming Mice.");
        assert_eq!(slot.source, SourceTag::FromCategories);
        assert_eq!(
            derive_specific_intention(&ItemRecord::new("c", "C", &["CDs"]))
                .unwrap()
                .text,
            "CDs."
        );
        assert_eq!(
            derive_specific_intention(&ItemRecord::new("e", "E", &[])),
            Err(AnnotatorError::SpecificIntentionUnavailable("e".into()))
        );
    }

    #[test]
    fn warm_cache_makes_no_upstream_call() {
        let (c, events) = resident_evil();
        let prompts = PromptSet::builtin();
        let req = prompts.preference_request(history_entries(&events, &c).unwrap());
        let teacher = FixtureTeacher::new(
            "re",
            [CompletionRecord {
                digest: req.digest(),
                text: "He prefers horror-based games with a strong narrative.".into(),
            }],
        );
        let cache = AnnotationCache::in_memory();
        let annotator = Annotator::new(&teacher, &cache, &prompts, AnnotatorConfig::default());
        let first = generate_explicit_preference(&annotator, &events, &c).unwrap();
        let second = generate_explicit_preference(&annotator, &events, &c).unwrap();
        assert_eq!(first, second);
        assert_eq!(
            first.text,
            "He prefers horror-based games with a strong narrative."
        );
        assert_eq!(first.source, SourceTag::FromTeacher);
        assert_eq!(teacher.calls(), 1);
        assert_eq!(annotator.stats().upstream_calls, 1);
        assert_eq!(annotator.stats().cache_hits, 1);
    }

    struct Scripted {
        replies: Mutex<Vec<Result<String, TeacherError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String, TeacherError>>) -> Self {
            replies.reverse();
            Scripted {
                replies: Mutex::new(replies),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl TeacherClient for Scripted {
        fn identity(&self) -> String {
            "scripted".into()
        }
        fn is_deterministic(&self) -> bool {
            false
        }
        fn complete(&self, _: &TeacherRequest) -> Result<String, TeacherError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().pop().unwrap_or(Ok(String::new()))
        }
    }

    fn config() -> AnnotatorConfig {
        AnnotatorConfig {
            retry: RetryPolicy::immediate(3),
            ..Default::default()
        }
    }

    #[test]
    fn empty_completion_is_retried_once_then_skipped() {
        let teacher = Scripted::new(vec![Ok(" ".into()), Ok(String::new()), Ok("late".into())]);
        let cache = AnnotationCache::in_memory();
        let prompts = PromptSet::builtin();
        let a = Annotator::new(&teacher, &cache, &prompts, config());
        let err = extract_vague_intention(&a, "Fun game.").unwrap_err();
        assert_eq!(err, AnnotatorError::EmptyCompletion);
        assert!(err.is_skip());
        assert_eq!(teacher.calls.load(Ordering::SeqCst), 2);
        assert!(cache.is_empty());
    }

    #[test]
    fn transient_failures_are_retried() {
        let teacher = Scripted::new(vec![
            Err(TeacherError::RateLimited {
                retry_after: Some(Duration::ZERO),
            }),
            Err(TeacherError::Transport("reset".into())),
            Ok("I want a game.".into()),
        ]);
        let cache = AnnotationCache::in_memory();
        let prompts = PromptSet::builtin();
        let a = Annotator::new(&teacher, &cache, &prompts, config());
        assert_eq!(
            extract_vague_intention(&a, "Fun.").unwrap().text,
            "I want a game."
        );
        assert_eq!(a.stats().upstream_calls, 3);
    }

    #[test]
    fn budget_stops_upstream_calls() {
        let teacher = DeterministicTeacher;
        let cache = AnnotationCache::in_memory();
        let prompts = PromptSet::builtin();
        let a = Annotator::new(
            &teacher,
            &cache,
            &prompts,
            AnnotatorConfig {
                max_upstream_calls: Some(1),
                ..config()
            },
        );
        extract_vague_intention(&a, "One.").unwrap();
        assert_eq!(
            extract_vague_intention(&a, "Two."),
            Err(AnnotatorError::BudgetExhausted)
        );
        // Cached answers stay available.
        extract_vague_intention(&a, "One.").unwrap();
    }

    #[test]
    fn prefetch_issues_each_prompt_once() {
        let teacher = FixtureTeacher::new("empty", []);
        let cache = AnnotationCache::in_memory();
        let prompts = PromptSet::builtin();
        let a = Annotator::new(&teacher, &cache, &prompts, config());
        let reqs: Vec<TeacherRequest> = (0..40)
            .map(|i| {
                prompts
                    .intention_request(&format!("Review {}.", i % 10), false)
                    .unwrap()
            })
            .collect();
        let failed = a.prefetch(&reqs).unwrap();
        assert_eq!(failed, 10);
        assert_eq!(teacher.calls(), 10);
    }
}
