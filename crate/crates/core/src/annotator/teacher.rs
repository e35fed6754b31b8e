//! Teacher-model clients.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationTask {
    ExplicitPreference,
    VagueIntention,
    /// The operator-supplied second intention prompt.
    VagueIntentionAlt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: 128,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }
}

/// Structured inputs behind a prompt, for clients that do not read prose.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherContext {
    History(Vec<HistoryEntry>),
    Review(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub title: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherRequest {
    pub prompt: String,
    pub params: GenerationParams,
    pub task: AnnotationTask,
    pub context: TeacherContext,
}

#[derive(Serialize)]
struct Wire<'a> {
    prompt: &'a str,
    #[serde(flatten)]
    params: &'a GenerationParams,
}

impl TeacherRequest {
    /// JSON body sent to a live teacher.
    pub fn wire_json(&self) -> String {
        serde_json::to_string(&Wire {
            prompt: &self.prompt,
            params: &self.params,
        })
        .expect("teacher request serializes")
    }

    /// Cache and fixture key: digest of the prompt and generation parameters.
    pub fn digest(&self) -> String {
        sha256_hex(self.wire_json().as_bytes())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeacherError {
    #[error("teacher unreachable: {0}")]
    Transport(String),
    #[error("teacher rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("teacher protocol error: {0}")]
    Protocol(String),
    #[error("no recorded completion for request {0}")]
    MissingFixture(String),
    #[error("teacher cannot handle this request: {0}")]
    Unsupported(String),
}

impl TeacherError {
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            TeacherError::Transport(_) | TeacherError::RateLimited { .. }
        )
    }
}

/// A text-completion backend used to synthesize slot contents.
pub trait TeacherClient: Send + Sync {
    fn identity(&self) -> String;

    /// True when every call goes to a paid or remote model.
    fn is_live(&self) -> bool {
        false
    }

    /// True when identical requests always yield identical completions.
    fn is_deterministic(&self) -> bool;

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError>;
}

#[cfg(feature = "net")]
#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Live teacher speaking the `{"prompt","max_tokens","temperature"}` →
/// `{"text"}` protocol over HTTP.
#[cfg(feature = "net")]
#[derive(Debug, Clone)]
pub struct HttpTeacher {
    endpoint: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[cfg(feature = "net")]
impl HttpTeacher {
    pub fn new(endpoint: &str, api_key: Option<String>) -> Result<Self, TeacherError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TeacherError::Transport(e.to_string()))?;
        Ok(HttpTeacher {
            endpoint: endpoint.to_string(),
            client,
            api_key,
        })
    }
}

#[cfg(feature = "net")]
impl TeacherClient for HttpTeacher {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn is_live(&self) -> bool {
        true
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        let mut call = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request.wire_json());
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| TeacherError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(TeacherError::RateLimited { retry_after });
        }
        let body = resp.text().map_err(|e| TeacherError::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(TeacherError::Transport(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(TeacherError::Protocol(format!("status {status}: {body}")));
        }
        serde_json::from_str::<WireResponse>(&body)
            .map(|r| r.text)
            .map_err(|e| TeacherError::Protocol(format!("{e}: {}", crate::scorer::excerpt(&body))))
    }
}

/// One line of a teacher fixture (and of the annotation cache file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub digest: String,
    pub text: String,
}

pub(crate) fn read_records<R: BufRead>(reader: R) -> std::io::Result<Vec<CompletionRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Replays recorded completions and counts every call it receives.
#[derive(Debug, Default)]
pub struct FixtureTeacher {
    name: String,
    entries: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl FixtureTeacher {
    pub fn new(name: impl Into<String>, records: impl IntoIterator<Item = CompletionRecord>) -> Self {
        FixtureTeacher {
            name: name.into(),
            entries: records.into_iter().map(|r| (r.digest, r.text)).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(FixtureTeacher::new(
            name,
            read_records(std::io::BufReader::new(file))?,
        ))
    }

    /// Calls received so far, hits and misses alike.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TeacherClient for FixtureTeacher {
    fn identity(&self) -> String {
        format!("fixture:{}", self.name)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = request.digest();
        self.entries
            .get(&digest)
            .cloned()
            .ok_or(TeacherError::MissingFixture(digest))
    }
}

/// Offline stand-in that builds completions from the structured context.
#[derive(Debug, Default, Clone, Copy)]
pub struct DeterministicTeacher;

impl DeterministicTeacher {
    /// `He prefers <leaf category> items such as <latest> and <previous>.`
    pub fn preference(history: &[HistoryEntry]) -> String {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for entry in history {
            if let Some(leaf) = entry.categories.last() {
                *counts.entry(leaf.as_str()).or_default() += 1;
            }
        }
        // BTreeMap iteration is lexicographic, so the first maximum wins ties.
        let mut best: Option<(&str, usize)> = None;
        for (cat, n) in counts {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((cat, n));
            }
        }
        let titles: Vec<&str> = history.iter().rev().take(2).map(|e| e.title.trim()).collect();
        let examples = titles.join(" and ");
        match best {
            Some((cat, _)) => format!("He prefers {cat} items such as {examples}."),
            None => format!("He prefers items such as {examples}."),
        }
    }

    /// First sentence of the review, re-cast to first person singular.
    pub fn intention(review: &str) -> String {
        let review = review.trim();
        let end = review
            .char_indices()
            .find(|&(i, c)| {
                matches!(c, '.' | '!' | '?')
                    && review[i + c.len_utf8()..]
                        .chars()
                        .next()
                        .is_none_or(char::is_whitespace)
            })
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(review.len());
        let sentence = review[..end].trim();
        let rewritten: Vec<String> = sentence.split(' ').map(rewrite_word).collect();
        let mut out = rewritten.join(" ");
        if !out.ends_with(['.', '!', '?']) {
            out.push('.');
        }
        let first_person = out.split(|c: char| !c.is_alphanumeric() && c != '\'').any(|w| {
            matches!(
                w.to_lowercase().as_str(),
                "i" | "i'm" | "i've" | "i'd" | "i'll" | "me" | "my" | "mine" | "myself"
            )
        });
        if first_person {
            out
        } else {
            format!("I am looking for something like this: {out}")
        }
    }
}

/// Plural first-person forms become singular ones.
fn rewrite_word(word: &str) -> String {
    const TABLE: [(&str, &str); 7] = [
        ("we", "I"),
        ("us", "me"),
        ("our", "my"),
        ("ours", "mine"),
        ("ourselves", "myself"),
        ("we're", "I'm"),
        ("we've", "I've"),
    ];
    let core_end = word
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric() || *c == '\'')
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let (core, tail) = word.split_at(core_end);
    let lower = core.to_lowercase();
    match TABLE.iter().find(|(from, _)| *from == lower) {
        Some((_, to)) => {
            let capital = core.chars().next().is_some_and(char::is_uppercase);
            let to = if capital || *to == "I" || to.starts_with("I'") {
                let mut c = to.chars();
                c.next()
                    .map(|f| f.to_uppercase().chain(c).collect())
                    .unwrap_or_default()
            } else {
                to.to_string()
            };
            format!("{to}{tail}")
        }
        None => word.to_string(),
    }
}

impl TeacherClient for DeterministicTeacher {
    fn identity(&self) -> String {
        "deterministic".into()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        match (&request.task, &request.context) {
            (AnnotationTask::ExplicitPreference, TeacherContext::History(h)) if !h.is_empty() => {
                Ok(Self::preference(h))
            }
            (
                AnnotationTask::VagueIntention | AnnotationTask::VagueIntentionAlt,
                TeacherContext::Review(r),
            ) if !r.trim().is_empty() => Ok(Self::intention(r)),
            _ => Err(TeacherError::Unsupported(format!("{:?}", request.task))),
        }
    }
}

/// Forwards to `inner` and keeps successful completions for a fixture file.
#[derive(Debug)]
pub struct RecordingTeacher<T> {
    inner: T,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<T: TeacherClient> RecordingTeacher<T> {
    pub fn new(inner: T) -> Self {
        RecordingTeacher {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn records(&self) -> Vec<CompletionRecord> {
        self.recorded
            .lock()
            .expect("recording lock")
            .iter()
            .map(|(digest, text)| CompletionRecord {
                digest: digest.clone(),
                text: text.clone(),
            })
            .collect()
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut *w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<T: TeacherClient> TeacherClient for RecordingTeacher<T> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        let text = self.inner.complete(request)?;
        self.recorded
            .lock()
            .expect("recording lock")
            .insert(request.digest(), text.clone());
        Ok(text)
    }
}

impl<T: TeacherClient + ?Sized> TeacherClient for &T {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn is_live(&self) -> bool {
        (**self).is_live()
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        (**self).complete(request)
    }
}

impl<T: TeacherClient + ?Sized> TeacherClient for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn is_live(&self) -> bool {
        (**self).is_live()
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }

    fn complete(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(title: &str, cats: &[&str]) -> HistoryEntry {
        HistoryEntry {
            title: title.into(),
            categories: cats.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn request(task: AnnotationTask, context: TeacherContext) -> TeacherRequest {
        TeacherRequest {
            prompt: "p".into(),
            params: GenerationParams::default(),
            task,
            context,
        }
    }

    #[test]
    fn fallback_preference_names_leaf_category_and_recent_titles() {
        let h = vec![
            entry("Old Game", &["Video Games", "Horror"]),
            entry("Mid Game", &["Video Games", "Action"]),
            entry("New Game", &["Video Games", "Horror"]),
        ];
        assert_eq!(
            DeterministicTeacher::preference(&h),
            "He prefers Horror items such as New Game and Mid Game."
        );
    }

    #[test]
    fn fallback_preference_ties_break_lexicographically() {
        let h = vec![entry("A", &["Zeta"]), entry("B", &["Alpha"])];
        assert_eq!(
            DeterministicTeacher::preference(&h),
            "He prefers Alpha items such as B and A."
        );
        assert_eq!(
            DeterministicTeacher::preference(&[entry("Solo", &[])]),
            "He prefers items such as Solo."
        );
    }

    #[test]
    fn fallback_intention_keeps_first_sentence_in_first_person() {
        assert_eq!(
            DeterministicTeacher::intention("We bought this for our son. He loves it."),
            "I bought this for my son."
        );
        assert_eq!(
            DeterministicTeacher::intention("Great graphics and a long story"),
            "I am looking for something like this: Great graphics and a long story."
        );
        assert_eq!(
            DeterministicTeacher::intention("My son loves v1.2 of the game! Really."),
            "My son loves v1.2 of the game!"
        );
    }

    #[test]
    fn digest_covers_prompt_and_parameters_only() {
        let a = request(AnnotationTask::VagueIntention, TeacherContext::Review("x".into()));
        let mut b = a.clone();
        b.context = TeacherContext::Review("y".into());
        assert_eq!(a.digest(), b.digest());
        b.params.temperature = 0.7;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(
            a.wire_json(),
            r#"{"prompt":"p","max_tokens":128,"temperature":0.0}"#
        );
    }

    #[test]
    fn fixture_teacher_counts_calls() {
        let req = request(AnnotationTask::VagueIntention, TeacherContext::Review("x".into()));
        let t = FixtureTeacher::new(
            "t",
            [CompletionRecord {
                digest: req.digest(),
                text: "I want x.".into(),
            }],
        );
        assert_eq!(t.complete(&req).unwrap(), "I want x.");
        let mut other = req.clone();
        other.prompt = "q".into();
        assert!(matches!(t.complete(&other), Err(TeacherError::MissingFixture(_))));
        assert_eq!(t.calls(), 2);
    }

    #[test]
    fn recording_round_trips_through_fixture() {
        let rec = RecordingTeacher::new(DeterministicTeacher);
        let req = request(
            AnnotationTask::ExplicitPreference,
            TeacherContext::History(vec![entry("A", &["X"])]),
        );
        let live = rec.complete(&req).unwrap();
        let mut buf = Vec::new();
        rec.write(&mut buf).unwrap();
        let fixture = FixtureTeacher::new("r", read_records(buf.as_slice()).unwrap());
        assert_eq!(fixture.complete(&req).unwrap(), live);
    }
}
