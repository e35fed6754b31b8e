//! Candidate pools for reranking: uniform negatives, large pools for grouped
//! reranking, and hard negatives from a co-occurrence/title retriever.

mod retriever;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::digest::rng_for;

pub use retriever::{
    build_retriever_index, retrieve_hard_negatives, training_sequences, RetrieverIndex, DEFAULT_ALPHA,
    DEFAULT_WINDOW,
};

pub const DEFAULT_NEGATIVES: usize = 9;
pub const LARGE_POOL_NEGATIVES: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    UniformRandom,
    HardRetrieved,
    LargeUniform,
}

impl PoolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolKind::UniformRandom => "uniform_random",
            PoolKind::HardRetrieved => "hard_retrieved",
            PoolKind::LargeUniform => "large_uniform",
        }
    }
}

/// A target item and the negatives it is ranked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    #[serde(rename = "target")]
    pub target_item_id: String,
    pub negatives: Vec<String>,
    #[serde(rename = "kind")]
    pub pool_kind: PoolKind,
    pub seed: u64,
    /// Negatives filled in uniformly because retrieval found too few.
    #[serde(default)]
    pub padded: usize,
}

impl CandidatePool {
    pub fn size(&self) -> usize {
        self.negatives.len() + 1
    }

    /// Target first, then negatives in pool order.
    pub fn items(&self) -> Vec<&str> {
        std::iter::once(self.target_item_id.as_str())
            .chain(self.negatives.iter().map(String::as_str))
            .collect()
    }

    /// Check the pool invariants against a user history.
    pub fn check(&self, history: &[&str]) -> Result<(), MatcherError> {
        let mut seen = BTreeSet::new();
        for n in &self.negatives {
            if n == &self.target_item_id || history.contains(&n.as_str()) || !seen.insert(n) {
                return Err(MatcherError::InvalidPool(n.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatcherError {
    #[error("need {needed} eligible negative items, only {available} available")]
    InsufficientItems { needed: usize, available: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("pool violates invariants at item {0}")]
    InvalidPool(String),
    #[error("retriever index: {0}")]
    Index(String),
}

/// Catalog items outside `history` and `target`, in id order.
pub(crate) fn eligible<'a>(catalog: &'a Catalog, history: &[&str], target: &str) -> Vec<&'a str> {
    let excluded: BTreeSet<&str> = history.iter().copied().chain([target]).collect();
    catalog
        .item_ids()
        .into_iter()
        .filter(|id| !excluded.contains(id))
        .collect()
}

pub(crate) fn draw(
    mut pool: Vec<&str>,
    n: usize,
    seed: u64,
    labels: &[&str],
) -> Result<Vec<String>, MatcherError> {
    if pool.len() < n {
        return Err(MatcherError::InsufficientItems {
            needed: n,
            available: pool.len(),
        });
    }
    let mut rng = rng_for(seed, labels);
    let (chosen, _) = pool.partial_shuffle(&mut rng, n);
    Ok(chosen.iter().map(|s| s.to_string()).collect())
}

fn uniform(
    catalog: &Catalog,
    history: &[&str],
    target: &str,
    n: usize,
    seed: u64,
    kind: PoolKind,
) -> Result<CandidatePool, MatcherError> {
    let negatives = draw(
        eligible(catalog, history, target),
        n,
        seed,
        &[kind.as_str(), target],
    )?;
    Ok(CandidatePool {
        target_item_id: target.to_string(),
        negatives,
        pool_kind: kind,
        seed,
        padded: 0,
    })
}

/// `n` distinct negatives drawn uniformly from items outside the history.
pub fn sample_uniform_pool(
    catalog: &Catalog,
    history: &[&str],
    target: &str,
    n: usize,
    seed: u64,
) -> Result<CandidatePool, MatcherError> {
    uniform(catalog, history, target, n, seed, PoolKind::UniformRandom)
}

/// As [`sample_uniform_pool`], for the 100-candidate grouped protocol.
pub fn sample_large_pool(
    catalog: &Catalog,
    history: &[&str],
    target: &str,
    n: usize,
    seed: u64,
) -> Result<CandidatePool, MatcherError> {
    uniform(catalog, history, target, n, seed, PoolKind::LargeUniform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemRecord;

    fn catalog(n: usize) -> Catalog {
        let mut c = Catalog::default();
        for i in 0..n {
            let id = format!("i{i:03}");
            c.items
                .insert(id.clone(), ItemRecord::new(id, format!("Item {i}"), &[]));
        }
        c
    }

    #[test]
    fn forced_set_when_exactly_enough_items() {
        let c = catalog(11);
        let pool = sample_uniform_pool(&c, &["i000"], "i001", 9, 5).unwrap();
        let got: BTreeSet<&str> = pool.negatives.iter().map(String::as_str).collect();
        let want: BTreeSet<&str> = c.item_ids().into_iter().skip(2).collect();
        assert_eq!(got, want);
        pool.check(&["i000"]).unwrap();
    }

    #[test]
    fn pools_are_deterministic_per_seed() {
        let c = catalog(200);
        let a = sample_uniform_pool(&c, &["i000"], "i001", 9, 5).unwrap();
        let b = sample_uniform_pool(&c, &["i000"], "i001", 9, 5).unwrap();
        let d = sample_uniform_pool(&c, &["i000"], "i001", 9, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.negatives, d.negatives);
    }

    #[test]
    fn too_few_items_is_an_error() {
        let c = catalog(10);
        assert_eq!(
            sample_uniform_pool(&c, &["i000"], "i001", 9, 1),
            Err(MatcherError::InsufficientItems {
                needed: 9,
                available: 8
            })
        );
    }

    #[test]
    fn large_pool_has_one_hundred_candidates() {
        let c = catalog(150);
        let history = ["i010", "i011", "i012"];
        let pool = sample_large_pool(&c, &history, "i000", LARGE_POOL_NEGATIVES, 3).unwrap();
        assert_eq!(pool.size(), 100);
        assert_eq!(pool.pool_kind, PoolKind::LargeUniform);
        pool.check(&history).unwrap();
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        let c = catalog(22);
        let history = ["i000"];
        let mut counts = std::collections::BTreeMap::new();
        let trials = 50_000u64;
        for seed in 0..trials {
            let pool = sample_uniform_pool(&c, &history, "i001", 9, seed).unwrap();
            for n in pool.negatives {
                *counts.entry(n).or_insert(0u64) += 1;
            }
        }
        assert_eq!(counts.len(), 20);
        for (item, k) in counts {
            let freq = k as f64 / trials as f64;
            assert!((freq - 9.0 / 20.0).abs() <= 0.02, "{item}: {freq}");
        }
    }
}
