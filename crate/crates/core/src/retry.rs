//! Bounded retries with exponential backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    /// Upper bound on any single wait, including server-provided hints.
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 1000,
            max_backoff_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests.
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug)]
pub enum Failure<E> {
    Retriable { error: E, retry_after: Option<Duration> },
    Fatal(E),
}

/// Run `op` until it succeeds, fails fatally, or attempts run out. `op`
/// receives the zero-based attempt number.
pub fn with_retries<T, E>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, Failure<E>>,
) -> Result<T, E> {
    let attempts = policy.attempts.max(1);
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retriable { error, retry_after }) => {
                attempt += 1;
                if attempt >= attempts {
                    return Err(error);
                }
                let wait = retry_after
                    .map(|d| d.min(Duration::from_millis(policy.max_backoff_ms)))
                    .unwrap_or_else(|| policy.backoff(attempt - 1));
                log::debug!("attempt {attempt} failed, retrying in {wait:?}");
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
        }
    }
}
