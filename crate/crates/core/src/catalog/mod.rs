//! Interaction data: ingestion, k-core filtering, user sequences and splits.

mod ingest;
pub mod io;
mod kcore;
mod sequence;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest, IngestOptions, IngestReport, LineError, RecordSource};
pub use kcore::kcore_filter;
pub use sequence::{build_sequences, DEFAULT_MAX_SEQUENCE_LEN};
pub use split::{
    leave_one_out_split, product_search_split, LeaveOneOutSplit, ProductSearchSplit, QueryPair, SplitKind,
    SplitPart, UserSplit, MIN_LOO_SEQUENCE_LEN,
};

/// One raw behavioural row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    #[serde(rename = "user")]
    pub user_id: String,
    #[serde(rename = "item")]
    pub item_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(rename = "review", default, skip_serializing_if = "Option::is_none")]
    pub review_text: Option<String>,
}

/// Item metadata row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    #[serde(rename = "item")]
    pub item_id: String,
    pub title: String,
    #[serde(default)]
    pub categories: Vec<String>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>, categories: &[&str]) -> Self {
        ItemRecord {
            item_id: item_id.into(),
            title: title.into(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Joined, de-duplicated interaction data for one dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    pub items: BTreeMap<String, ItemRecord>,
    pub interactions: Vec<InteractionRecord>,
    pub provenance: String,
}

impl Catalog {
    pub fn item(&self, item_id: &str) -> Option<&ItemRecord> {
        self.items.get(item_id)
    }

    /// Item ids in lexicographic order.
    pub fn item_ids(&self) -> Vec<&str> {
        self.items.keys().map(String::as_str).collect()
    }

    pub fn num_users(&self) -> usize {
        let mut users: Vec<&str> = self.interactions.iter().map(|r| r.user_id.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }
}

/// One event in a user's chronological sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "item")]
    pub item_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "review", default, skip_serializing_if = "Option::is_none")]
    pub review_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSequence {
    #[serde(rename = "user")]
    pub user_id: String,
    pub events: Vec<Event>,
}

impl UserSequence {
    pub fn item_ids(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.item_id.as_str()).collect()
    }
}

/// An evaluation split of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSplit {
    LeaveOneOut(LeaveOneOutSplit),
    ProductSearch(ProductSearchSplit),
}

impl DatasetSplit {
    pub fn kind(&self) -> SplitKind {
        match self {
            DatasetSplit::LeaveOneOut(_) => SplitKind::LeaveOneOut,
            DatasetSplit::ProductSearch(_) => SplitKind::ProductSearch801010,
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {total} lines malformed, above the {threshold} error-rate threshold")]
    ErrorRateExceeded {
        malformed: usize,
        total: usize,
        threshold: f64,
        report: Box<IngestReport>,
    },
    #[error("empty catalog after {0}")]
    EmptyCatalog(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("product search split needs at least 10 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("manifest error: {0}")]
    Manifest(String),
}
