//! Recorded scorer responses keyed by request digest.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LogLikelihood, ScoreError, ScoreRequest, Scorer};

/// One line of a scorer fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub scores: Vec<LogLikelihood>,
}

/// Replays recorded responses; unknown requests are an error.
#[derive(Debug, Clone, Default)]
pub struct FixtureScorer {
    name: String,
    entries: BTreeMap<String, Vec<LogLikelihood>>,
}

impl FixtureScorer {
    pub fn new(name: impl Into<String>, entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        FixtureScorer {
            name: name.into(),
            entries: entries.into_iter().map(|e| (e.digest, e.scores)).collect(),
        }
    }

    pub fn read<R: BufRead>(name: &str, reader: R) -> Result<Self, ScoreError> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ScoreError::Fixture(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line)
                .map_err(|e| ScoreError::Fixture(format!("line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Ok(FixtureScorer::new(name, entries))
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let file =
            std::fs::File::open(path).map_err(|e| ScoreError::Fixture(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read(&name, std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Scorer for FixtureScorer {
    fn identity(&self) -> String {
        format!("fixture:{}", self.name)
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        let digest = request.digest();
        self.entries
            .get(&digest)
            .cloned()
            .ok_or(ScoreError::MissingFixture(digest))
    }
}

/// Passes requests through to `inner` and keeps every response so it can be
/// written out as a fixture.
#[derive(Debug)]
pub struct RecordingScorer<S> {
    inner: S,
    recorded: Mutex<BTreeMap<String, Vec<LogLikelihood>>>,
}

impl<S: Scorer> RecordingScorer<S> {
    pub fn new(inner: S) -> Self {
        RecordingScorer {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.recorded
            .lock()
            .expect("recording lock")
            .iter()
            .map(|(digest, scores)| FixtureEntry {
                digest: digest.clone(),
                scores: scores.clone(),
            })
            .collect()
    }

    /// Write recorded entries in digest order.
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for entry in self.entries() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<S: Scorer> Scorer for RecordingScorer<S> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        let out = self.inner.score_batch(request)?;
        self.recorded
            .lock()
            .expect("recording lock")
            .insert(request.digest(), out.clone());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::LexicalScorer;

    #[test]
    fn recorded_responses_replay_exactly() {
        let rec = RecordingScorer::new(LexicalScorer);
        let reqs: Vec<ScoreRequest> = ["a b", "c d"]
            .iter()
            .map(|i| ScoreRequest::new(*i, vec!["a".into(), "d".into()]))
            .collect();
        let live: Vec<_> = reqs.iter().map(|r| rec.score_batch(r).unwrap()).collect();
        let mut buf = Vec::new();
        rec.write(&mut buf).unwrap();
        let fixture = FixtureScorer::read("t", buf.as_slice()).unwrap();
        assert_eq!(fixture.len(), 2);
        for (r, expected) in reqs.iter().zip(live) {
            assert_eq!(fixture.score_batch(r).unwrap(), expected);
        }
    }

    #[test]
    fn unknown_request_is_reported() {
        let fixture = FixtureScorer::default();
        let r = ScoreRequest::new("x", vec!["a".into()]);
        assert_eq!(
            fixture.score_batch(&r),
            Err(ScoreError::MissingFixture(r.digest()))
        );
    }

    #[test]
    fn malformed_fixture_line_is_an_error() {
        assert!(FixtureScorer::read("t", "not json\n".as_bytes()).is_err());
    }
}
