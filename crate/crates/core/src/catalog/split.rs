use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CatalogError, Event, UserSequence};
use crate::digest::rng_for;

/// Sequences shorter than this are excluded from leave-one-out splits so the
/// training part keeps at least one event.
pub const MIN_LOO_SEQUENCE_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    LeaveOneOut,
    ProductSearch801010,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        }
    }
}

/// One user's leave-one-out partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    #[serde(rename = "user")]
    pub user_id: String,
    pub train: Vec<Event>,
    pub validation: Event,
    pub test: Event,
}

impl UserSplit {
    /// The held-out event predicted for `part`. For the training part this is
    /// the last training event.
    pub fn target(&self, part: SplitPart) -> &Event {
        match part {
            SplitPart::Train => self.train.last().expect("train part is never empty"),
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }

    /// Events visible before the target of `part`, oldest first.
    pub fn history(&self, part: SplitPart) -> Vec<&Event> {
        match part {
            SplitPart::Train => self.train[..self.train.len() - 1].iter().collect(),
            SplitPart::Validation => self.train.iter().collect(),
            SplitPart::Test => self
                .train
                .iter()
                .chain(std::iter::once(&self.validation))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeaveOneOutSplit {
    pub users: Vec<UserSplit>,
    /// Users whose sequences were too short to split.
    pub excluded: Vec<String>,
}

/// Hold out each user's last event for test and the one before it for
/// validation.
pub fn leave_one_out_split(sequences: &[UserSequence]) -> LeaveOneOutSplit {
    let mut split = LeaveOneOutSplit::default();
    for seq in sequences {
        let n = seq.events.len();
        if n < MIN_LOO_SEQUENCE_LEN {
            split.excluded.push(seq.user_id.clone());
            continue;
        }
        split.users.push(UserSplit {
            user_id: seq.user_id.clone(),
            train: seq.events[..n - 2].to_vec(),
            validation: seq.events[n - 2].clone(),
            test: seq.events[n - 1].clone(),
        });
    }
    if !split.excluded.is_empty() {
        log::warn!(
            "excluded {} users with fewer than {MIN_LOO_SEQUENCE_LEN} events",
            split.excluded.len()
        );
    }
    split
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryPair {
    #[serde(rename = "item")]
    pub item_id: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSearchSplit {
    pub train: Vec<QueryPair>,
    pub validation: Vec<QueryPair>,
    pub test: Vec<QueryPair>,
    pub seed: u64,
}

impl ProductSearchSplit {
    pub fn part(&self, part: SplitPart) -> &[QueryPair] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }
}

/// Seeded 80/10/10 partition of `(item, query)` pairs.
///
/// Pairs sharing an item always land in the same bucket, so item sets are
/// disjoint across buckets. With one query per item the bucket sizes are
/// exact up to rounding; items with many queries can push a bucket past its
/// share by less than one item's worth of pairs.
pub fn product_search_split(pairs: &[QueryPair], seed: u64) -> Result<ProductSearchSplit, CatalogError> {
    let n = pairs.len();
    if n < 10 {
        return Err(CatalogError::TooFewPairs(n));
    }
    let mut groups: BTreeMap<&str, Vec<QueryPair>> = BTreeMap::new();
    for pair in pairs {
        groups
            .entry(pair.item_id.as_str())
            .or_default()
            .push(pair.clone());
    }
    let mut groups: Vec<Vec<QueryPair>> = groups.into_values().collect();
    let mut rng = rng_for(seed, &["product-search-split"]);
    groups.shuffle(&mut rng);

    let test_target = (n + 5) / 10;
    let valid_target = (n + 5) / 10;
    let mut split = ProductSearchSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for group in groups {
        let bucket = if split.test.len() < test_target {
            &mut split.test
        } else if split.validation.len() < valid_target {
            &mut split.validation
        } else {
            &mut split.train
        };
        bucket.extend(group);
    }
    Ok(split)
}
