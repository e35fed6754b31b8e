//! Candidate scoring by summed token log-likelihood, and ranking.

mod fixture;
mod mock;
#[cfg(feature = "net")]
mod remote;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

pub use fixture::{FixtureEntry, FixtureScorer, RecordingScorer};
pub use mock::{
    lexical_baseline_score, tokens, ConstantTokenScorer, LexicalScorer, OracleScorer, RandomScorer,
};
#[cfg(feature = "net")]
pub use remote::RemoteScorer;

/// An instruction and the candidate outputs to score under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    #[serde(rename = "instruction")]
    pub instruction_text: String,
    #[serde(rename = "candidates")]
    pub candidate_outputs: Vec<String>,
    /// Index of the ground-truth candidate. Never sent over the wire; only
    /// oracle scorers read it.
    #[serde(skip)]
    pub target_hint: Option<usize>,
}

impl ScoreRequest {
    pub fn new(instruction_text: impl Into<String>, candidate_outputs: Vec<String>) -> Self {
        ScoreRequest {
            instruction_text: instruction_text.into(),
            candidate_outputs,
            target_hint: None,
        }
    }

    pub fn with_target_hint(mut self, index: usize) -> Self {
        self.target_hint = Some(index);
        self
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.candidate_outputs.is_empty() {
            return Err(ScoreError::InvalidRequest("no candidates".into()));
        }
        if let Some(i) = self.candidate_outputs.iter().position(|c| c.trim().is_empty()) {
            return Err(ScoreError::InvalidRequest(format!("candidate {i} is empty")));
        }
        if let Some(t) = self.target_hint {
            if t >= self.candidate_outputs.len() {
                return Err(ScoreError::InvalidRequest(format!(
                    "target hint {t} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Digest of the wire form, used to key recorded responses.
    pub fn digest(&self) -> String {
        let wire = serde_json::to_vec(self).expect("request serializes");
        sha256_hex(&wire)
    }
}

/// Summed log-probability of a candidate's tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub total: f64,
    pub token_count: u32,
}

impl LogLikelihood {
    pub fn new(total: f64, token_count: u32) -> Self {
        LogLikelihood { total, token_count }
    }

    pub fn per_token_mean(&self) -> f64 {
        self.total / f64::from(self.token_count.max(1))
    }

    fn check(&self) -> Result<(), String> {
        if !self.total.is_finite() || self.total > 0.0 {
            return Err(format!(
                "total {} is not a finite non-positive number",
                self.total
            ));
        }
        if self.token_count == 0 {
            return Err("token_count is zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
    #[error("scoring backend unreachable: {0}")]
    Transport(String),
    #[error("scoring backend protocol error: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },
    #[error("no recorded response for request {0}")]
    MissingFixture(String),
    #[error("fixture file: {0}")]
    Fixture(String),
}

impl ScoreError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScoreError::Transport(_))
    }
}

/// A backend that scores every candidate of a request under its instruction.
pub trait Scorer: Send + Sync {
    /// Stable description recorded in evaluation manifests.
    fn identity(&self) -> String;

    /// One result per candidate, in candidate order.
    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        (**self).score_batch(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        (**self).score_batch(request)
    }
}

pub(crate) fn excerpt(raw: &str) -> String {
    raw.chars().take(200).collect()
}

/// Validate the request, score it and check the backend's answer.
pub fn score<S: Scorer + ?Sized>(
    scorer: &S,
    request: &ScoreRequest,
) -> Result<Vec<LogLikelihood>, ScoreError> {
    request.validate()?;
    let out = scorer.score_batch(request)?;
    let protocol = |message: String| ScoreError::Protocol {
        excerpt: excerpt(&format!("{out:?}")),
        message,
    };
    if out.len() != request.candidate_outputs.len() {
        return Err(protocol(format!(
            "expected {} scores, got {}",
            request.candidate_outputs.len(),
            out.len()
        )));
    }
    for (i, ll) in out.iter().enumerate() {
        ll.check().map_err(|m| protocol(format!("score {i}: {m}")))?;
    }
    Ok(out)
}

/// Score several requests with at most `concurrency` in flight. Results keep
/// request order.
pub fn score_many<S: Scorer + ?Sized>(
    scorer: &S,
    requests: &[ScoreRequest],
    concurrency: usize,
) -> Vec<Result<Vec<LogLikelihood>, ScoreError>> {
    let concurrency = concurrency.max(1);
    if concurrency == 1 || requests.len() < 2 {
        return requests.iter().map(|r| score(scorer, r)).collect();
    }
    let chunk = requests.len().div_ceil(concurrency);
    std::thread::scope(|s| {
        let handles: Vec<_> = requests
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|r| score(scorer, r)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    })
}

/// How candidates of different lengths are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Raw summed log-likelihood.
    #[default]
    Sum,
    /// Log-likelihood divided by token count.
    PerTokenMean,
}

impl ScoreMode {
    pub fn value(self, ll: &LogLikelihood) -> f64 {
        match self {
            ScoreMode::Sum => ll.total,
            ScoreMode::PerTokenMean => ll.per_token_mean(),
        }
    }
}

/// Candidate indices, best first. Ties keep the original order.
pub fn rank(scores: &[LogLikelihood]) -> Vec<usize> {
    rank_with(scores, ScoreMode::Sum)
}

pub fn rank_with(scores: &[LogLikelihood], mode: ScoreMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (mode.value(&scores[a]), mode.value(&scores[b]));
        y.partial_cmp(&x).unwrap_or(Ordering::Equal)
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lls(totals: &[f64]) -> Vec<LogLikelihood> {
        totals.iter().map(|&t| LogLikelihood::new(t, 1)).collect()
    }

    #[test]
    fn rank_sorts_descending() {
        assert_eq!(rank(&lls(&[-1.0, -3.0, -2.0])), vec![0, 2, 1]);
        assert_eq!(rank(&lls(&[-2.0, -1.0])), vec![1, 0]);
        assert_eq!(rank(&lls(&[-1.0; 5])), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn per_token_mode_normalizes_length() {
        let scores = vec![LogLikelihood::new(-4.0, 8), LogLikelihood::new(-1.0, 1)];
        assert_eq!(rank(&scores), vec![1, 0]);
        assert_eq!(rank_with(&scores, ScoreMode::PerTokenMean), vec![0, 1]);
    }

    #[test]
    fn requests_are_validated() {
        assert!(ScoreRequest::new("x", vec![]).validate().is_err());
        assert!(ScoreRequest::new("x", vec!["a".into(), " ".into()])
            .validate()
            .is_err());
        assert!(ScoreRequest::new("x", vec!["a".into()])
            .with_target_hint(1)
            .validate()
            .is_err());
    }

    #[test]
    fn target_hint_is_not_part_of_the_wire_form() {
        let a = ScoreRequest::new("x", vec!["a".into(), "b".into()]);
        let b = a.clone().with_target_hint(1);
        assert_eq!(a.digest(), b.digest());
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, r#"{"instruction":"x","candidates":["a","b"]}"#);
    }

    struct Broken(Vec<LogLikelihood>);

    impl Scorer for Broken {
        fn identity(&self) -> String {
            "broken".into()
        }
        fn score_batch(&self, _: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn misaligned_or_invalid_responses_are_protocol_errors() {
        let req = ScoreRequest::new("x", vec!["a".into(), "b".into()]);
        let short = Broken(lls(&[-1.0]));
        assert!(matches!(score(&short, &req), Err(ScoreError::Protocol { .. })));
        let positive = Broken(lls(&[-1.0, 0.5]));
        assert!(matches!(score(&positive, &req), Err(ScoreError::Protocol { .. })));
        let nan = Broken(lls(&[-1.0, f64::NAN]));
        assert!(matches!(score(&nan, &req), Err(ScoreError::Protocol { .. })));
    }

    #[test]
    fn score_many_keeps_request_order() {
        let scorer = LexicalScorer;
        let reqs: Vec<ScoreRequest> = (0..17)
            .map(|i| ScoreRequest::new(format!("w{i}"), vec![format!("w{i}"), "other".into()]))
            .collect();
        let serial = score_many(&scorer, &reqs, 1);
        let parallel = score_many(&scorer, &reqs, 4);
        assert_eq!(serial, parallel);
    }

    proptest! {
        #[test]
        fn rank_is_shift_invariant(
            totals in prop::collection::vec(-50i32..0, 1..20),
            shift in -20i32..0,
        ) {
            let base: Vec<f64> = totals.iter().map(|&t| f64::from(t)).collect();
            let shifted: Vec<f64> = base.iter().map(|t| t + f64::from(shift)).collect();
            prop_assert_eq!(rank(&lls(&base)), rank(&lls(&shifted)));
        }

        #[test]
        fn rank_is_a_stable_permutation(totals in prop::collection::vec(-5i32..0, 1..30)) {
            let scores = lls(&totals.iter().map(|&t| f64::from(t)).collect::<Vec<_>>());
            let order = rank(&scores);
            let mut seen = order.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
            for w in order.windows(2) {
                let (a, b) = (scores[w[0]].total, scores[w[1]].total);
                prop_assert!(a > b || (a == b && w[0] < w[1]));
            }
        }
    }
}
