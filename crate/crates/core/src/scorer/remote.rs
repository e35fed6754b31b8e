//! HTTP client for the `/v1/score` wire protocol.

use std::time::Duration;

use serde::Deserialize;

use super::{excerpt, LogLikelihood, ScoreError, ScoreRequest, Scorer};
use crate::retry::{with_retries, Failure, RetryPolicy};

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<LogLikelihood>,
}

/// Scores through a model server. Non-200 answers and transport failures are
/// retried per `policy`.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    endpoint: String,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    api_key: Option<String>,
}

impl RemoteScorer {
    /// `endpoint` is the server base URL, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, policy: RetryPolicy) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ScoreError::Transport(e.to_string()))?;
        Ok(RemoteScorer {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            policy,
            api_key: None,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, Failure<ScoreError>> {
        let mut call = self
            .client
            .post(format!("{}/v1/score", self.endpoint))
            .json(request);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| Failure::Retriable {
            error: ScoreError::Transport(e.to_string()),
            retry_after: None,
        })?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.text().map_err(|e| Failure::Retriable {
            error: ScoreError::Transport(e.to_string()),
            retry_after: None,
        })?;
        if !status.is_success() {
            return Err(Failure::Retriable {
                error: ScoreError::Transport(format!("status {status}: {}", excerpt(&body))),
                retry_after,
            });
        }
        serde_json::from_str::<ScoreResponse>(&body)
            .map(|r| r.scores)
            .map_err(|e| {
                Failure::Fatal(ScoreError::Protocol {
                    message: e.to_string(),
                    excerpt: excerpt(&body),
                })
            })
    }
}

impl Scorer for RemoteScorer {
    fn identity(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        with_retries(&self.policy, |_| self.attempt(request))
    }
}
