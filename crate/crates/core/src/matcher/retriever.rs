use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{draw, eligible, CandidatePool, MatcherError, PoolKind};
use crate::catalog::{Catalog, LeaveOneOutSplit};

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const INDEX_SCHEMA_VERSION: u32 = 1;

type Weights = BTreeMap<String, f64>;

/// Co-occurrence counts over training sequences plus TF-IDF title weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverIndex {
    pub schema_version: u32,
    pub window: usize,
    pub alpha: f64,
    /// Symmetric pair counts; only non-zero entries are stored.
    pub cooccurrence: BTreeMap<String, BTreeMap<String, u32>>,
    pub title_weights: BTreeMap<String, Weights>,
}

/// Training-part item sequences of a leave-one-out split.
pub fn training_sequences(split: &LeaveOneOutSplit) -> Vec<Vec<String>> {
    split
        .users
        .iter()
        .map(|u| u.train.iter().map(|e| e.item_id.clone()).collect())
        .collect()
}

fn title_terms(title: &str) -> Vec<String> {
    title.split_whitespace().map(str::to_lowercase).collect()
}

/// Count item pairs at most `window` positions apart within each sequence,
/// and weight title terms by tf · ln(N / df) over the catalog.
pub fn build_retriever_index(sequences: &[Vec<String>], catalog: &Catalog, window: usize) -> RetrieverIndex {
    let mut cooccurrence: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for seq in sequences {
        for (i, a) in seq.iter().enumerate() {
            for b in seq.iter().skip(i + 1).take(window) {
                if a == b {
                    continue;
                }
                *cooccurrence
                    .entry(a.clone())
                    .or_default()
                    .entry(b.clone())
                    .or_default() += 1;
                *cooccurrence
                    .entry(b.clone())
                    .or_default()
                    .entry(a.clone())
                    .or_default() += 1;
            }
        }
    }

    let n_items = catalog.items.len() as f64;
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut tf: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for item in catalog.items.values() {
        let counts = tf.entry(item.item_id.clone()).or_default();
        for term in title_terms(&item.title) {
            *counts.entry(term).or_default() += 1;
        }
        for term in counts.keys() {
            *df.entry(term.clone()).or_default() += 1;
        }
    }
    let title_weights = tf
        .into_iter()
        .map(|(item, counts)| {
            let w = counts
                .into_iter()
                .map(|(term, c)| {
                    let idf = (n_items / df[&term] as f64).ln();
                    (term, c as f64 * idf)
                })
                .collect();
            (item, w)
        })
        .collect();

    RetrieverIndex {
        schema_version: INDEX_SCHEMA_VERSION,
        window,
        alpha: DEFAULT_ALPHA,
        cooccurrence,
        title_weights,
    }
}

fn dot(a: &Weights, b: &Weights) -> f64 {
    a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum()
}

fn norm(a: &Weights) -> f64 {
    a.values().map(|x| x * x).sum::<f64>().sqrt()
}

impl RetrieverIndex {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn cooccurrence(&self, a: &str, b: &str) -> u32 {
        self.cooccurrence
            .get(a)
            .and_then(|m| m.get(b))
            .copied()
            .unwrap_or(0)
    }

    /// Blended score of every item in `items` against `history`.
    pub fn scores(&self, history: &[&str], items: &[&str]) -> Vec<f64> {
        let raw: Vec<f64> = items
            .iter()
            .map(|i| history.iter().map(|h| f64::from(self.cooccurrence(i, h))).sum())
            .collect();
        let max = raw.iter().copied().fold(0.0, f64::max);

        let mut centroid = Weights::new();
        let mut counted = 0usize;
        for h in history {
            if let Some(w) = self.title_weights.get(*h) {
                counted += 1;
                for (t, x) in w {
                    *centroid.entry(t.clone()).or_default() += x;
                }
            }
        }
        for x in centroid.values_mut() {
            *x /= counted.max(1) as f64;
        }
        let centroid_norm = norm(&centroid);

        items
            .iter()
            .zip(raw)
            .map(|(item, co)| {
                let co = if max > 0.0 { co / max } else { 0.0 };
                let cos = match self.title_weights.get(*item) {
                    Some(w) if centroid_norm > 0.0 && norm(w) > 0.0 => {
                        dot(w, &centroid) / (norm(w) * centroid_norm)
                    }
                    _ => 0.0,
                };
                self.alpha * co + (1.0 - self.alpha) * cos
            })
            .collect()
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<(), MatcherError> {
        serde_json::to_writer(w, self).map_err(|e| MatcherError::Index(e.to_string()))
    }

    pub fn read_json<R: std::io::Read>(r: R) -> Result<Self, MatcherError> {
        let index: RetrieverIndex =
            serde_json::from_reader(r).map_err(|e| MatcherError::Index(e.to_string()))?;
        if index.schema_version != INDEX_SCHEMA_VERSION {
            return Err(MatcherError::Index(format!(
                "unsupported schema version {}",
                index.schema_version
            )));
        }
        Ok(index)
    }
}

/// The `n` highest-scoring eligible items with a positive score, ties by id.
/// Shortfalls are padded with uniform negatives and counted in `padded`.
pub fn retrieve_hard_negatives(
    index: &RetrieverIndex,
    catalog: &Catalog,
    history: &[&str],
    target: &str,
    n: usize,
    seed: u64,
) -> Result<CandidatePool, MatcherError> {
    if history.is_empty() {
        return Err(MatcherError::EmptyHistory);
    }
    let items = eligible(catalog, history, target);
    if items.len() < n {
        return Err(MatcherError::InsufficientItems {
            needed: n,
            available: items.len(),
        });
    }
    let scores = index.scores(history, &items);
    let mut ranked: Vec<(f64, &str)> = scores
        .into_iter()
        .zip(items.iter().copied())
        .filter(|(s, _)| *s > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let mut negatives: Vec<String> = ranked.iter().take(n).map(|(_, i)| i.to_string()).collect();
    let padded = n - negatives.len();
    if padded > 0 {
        let rest: Vec<&str> = items
            .iter()
            .copied()
            .filter(|i| !negatives.iter().any(|n| n == i))
            .collect();
        negatives.extend(draw(rest, padded, seed, &["hard-pad", target])?);
    }
    Ok(CandidatePool {
        target_item_id: target.to_string(),
        negatives,
        pool_kind: PoolKind::HardRetrieved,
        seed,
        padded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemRecord;

    fn catalog(items: &[(&str, &str)]) -> Catalog {
        let mut c = Catalog::default();
        for (id, title) in items {
            c.items.insert(id.to_string(), ItemRecord::new(*id, *title, &[]));
        }
        c
    }

    fn seqs(s: &[&[&str]]) -> Vec<Vec<String>> {
        s.iter()
            .map(|q| q.iter().map(|i| i.to_string()).collect())
            .collect()
    }

    #[test]
    fn counts_are_symmetric_within_sequences() {
        let c = catalog(&[("a", "A"), ("b", "B"), ("x", "X"), ("y", "Y")]);
        let idx = build_retriever_index(&seqs(&[&["a", "b"], &["x", "y"]]), &c, 5);
        assert_eq!(idx.cooccurrence("a", "b"), 1);
        assert_eq!(idx.cooccurrence("b", "a"), 1);
        assert_eq!(idx.cooccurrence("a", "x"), 0);
        assert_eq!(idx.cooccurrence("b", "y"), 0);
    }

    #[test]
    fn window_limits_pair_distance() {
        let c = catalog(&[("a", "A"), ("b", "B"), ("c", "C")]);
        let idx = build_retriever_index(&seqs(&[&["a", "b", "c"]]), &c, 1);
        assert_eq!(idx.cooccurrence("a", "b"), 1);
        assert_eq!(idx.cooccurrence("a", "c"), 0);
    }

    #[test]
    fn ubiquitous_terms_get_zero_weight() {
        let c = catalog(&[("a", "game alpha"), ("b", "game beta")]);
        let idx = build_retriever_index(&[], &c, 5);
        assert_eq!(idx.title_weights["a"]["game"], 0.0);
        assert!((idx.title_weights["a"]["alpha"] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn related_items_outrank_isolated_ones() {
        let c = catalog(&[
            ("h1", "horror zombie game"),
            ("h2", "horror survival game"),
            ("rel", "horror zombie survival"),
            ("iso", "piano sheet music"),
            ("t", "target"),
        ]);
        let idx = build_retriever_index(&seqs(&[&["h1", "rel", "h2"]]), &c, 5);
        let pool = retrieve_hard_negatives(&idx, &c, &["h1", "h2"], "t", 1, 0).unwrap();
        assert_eq!(pool.negatives, vec!["rel".to_string()]);
        assert_eq!(pool.padded, 0);
    }

    #[test]
    fn pure_cooccurrence_when_alpha_is_one() {
        let c = catalog(&[
            ("h", "alpha"),
            ("a", "beta"),
            ("b", "alpha gamma"),
            ("t", "delta"),
        ]);
        let idx =
            build_retriever_index(&seqs(&[&["h", "a"], &["h", "a"], &["h", "b"]]), &c, 5).with_alpha(1.0);
        let pool = retrieve_hard_negatives(&idx, &c, &["h"], "t", 2, 0).unwrap();
        assert_eq!(pool.negatives, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn shortfall_is_padded_and_flagged() {
        let c = catalog(&[
            ("h", "one"),
            ("a", "two"),
            ("b", "three"),
            ("d", "four"),
            ("t", "five"),
        ]);
        let idx = build_retriever_index(&seqs(&[&["h", "a"]]), &c, 5);
        let pool = retrieve_hard_negatives(&idx, &c, &["h"], "t", 3, 9).unwrap();
        assert_eq!(pool.negatives[0], "a");
        assert_eq!(pool.padded, 2);
        pool.check(&["h"]).unwrap();
    }

    #[test]
    fn index_round_trips_through_json() {
        let c = catalog(&[("a", "x y"), ("b", "y z")]);
        let idx = build_retriever_index(&seqs(&[&["a", "b"]]), &c, 5);
        let mut buf = Vec::new();
        idx.write_json(&mut buf).unwrap();
        assert_eq!(RetrieverIndex::read_json(buf.as_slice()).unwrap(), idx);
    }
}
