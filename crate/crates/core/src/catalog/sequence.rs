use std::collections::BTreeMap;

use super::{Catalog, Event, UserSequence};

pub const DEFAULT_MAX_SEQUENCE_LEN: usize = 20;

/// Group interactions into per-user chronological sequences.
///
/// Events are ordered by timestamp, ties broken by item id. Only the most
/// recent `max_len` events are kept. Users come out in id order.
pub fn build_sequences(catalog: &Catalog, max_len: usize) -> Vec<UserSequence> {
    let mut by_user: BTreeMap<&str, Vec<Event>> = BTreeMap::new();
    for row in &catalog.interactions {
        by_user.entry(row.user_id.as_str()).or_default().push(Event {
            item_id: row.item_id.clone(),
            timestamp: row.timestamp,
            review_text: row.review_text.clone(),
        });
    }
    by_user
        .into_iter()
        .map(|(user, mut events)| {
            events.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.item_id.cmp(&b.item_id))
            });
            if events.len() > max_len {
                events.drain(..events.len() - max_len);
            }
            UserSequence {
                user_id: user.to_string(),
                events,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::InteractionRecord;
    use proptest::prelude::*;

    fn catalog(rows: &[(&str, &str, i64)]) -> Catalog {
        Catalog {
            items: Default::default(),
            interactions: rows
                .iter()
                .map(|(u, i, t)| InteractionRecord {
                    user_id: u.to_string(),
                    item_id: i.to_string(),
                    timestamp: *t,
                    rating: None,
                    review_text: None,
                })
                .collect(),
            provenance: "t".into(),
        }
    }

    #[test]
    fn keeps_most_recent_events() {
        let ids: Vec<String> = (1..=25).map(|i| format!("i{i:02}")).collect();
        let rows: Vec<(&str, &str, i64)> = ids
            .iter()
            .enumerate()
            .rev()
            .map(|(t, id)| ("u", id.as_str(), t as i64))
            .collect();
        let seqs = build_sequences(&catalog(&rows), 20);
        assert_eq!(seqs.len(), 1);
        let got: Vec<&str> = seqs[0].item_ids();
        let want: Vec<&str> = ids[5..].iter().map(String::as_str).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn breaks_timestamp_ties_by_item_id() {
        let seqs = build_sequences(&catalog(&[("u", "b", 3), ("u", "a", 3)]), 20);
        assert_eq!(seqs[0].item_ids(), vec!["a", "b"]);
    }

    #[test]
    fn short_sequences_are_kept_whole() {
        let rows = [
            ("u", "e", 5),
            ("u", "d", 4),
            ("u", "c", 3),
            ("u", "b", 2),
            ("u", "a", 1),
        ];
        let seqs = build_sequences(&catalog(&rows), 20);
        assert_eq!(seqs[0].item_ids(), vec!["a", "b", "c", "d", "e"]);
    }

    proptest! {
        #[test]
        fn sequences_are_sorted_bounded_and_preserve_retained_items(
            rows in proptest::collection::vec((0u8..4, 0u8..30, 0i64..50), 1..120),
            max_len in 1usize..25,
        ) {
            let owned: Vec<(String, String, i64)> = rows
                .iter()
                .map(|(u, i, t)| (format!("u{u}"), format!("i{i}"), *t))
                .collect();
            let refs: Vec<(&str, &str, i64)> =
                owned.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)).collect();
            let seqs = build_sequences(&catalog(&refs), max_len);
            for seq in &seqs {
                prop_assert!(seq.events.len() <= max_len);
                for w in seq.events.windows(2) {
                    prop_assert!(w[0].timestamp <= w[1].timestamp);
                }
                // The retained events are the newest `max_len` of the user's rows.
                let mut all: Vec<(i64, String)> = owned
                    .iter()
                    .filter(|(u, _, _)| *u == seq.user_id)
                    .map(|(_, i, t)| (*t, i.clone()))
                    .collect();
                all.sort();
                let keep = all.len().min(max_len);
                let mut want: Vec<String> =
                    all[all.len() - keep..].iter().map(|(_, i)| i.clone()).collect();
                let mut got: Vec<String> = seq.events.iter().map(|e| e.item_id.clone()).collect();
                want.sort();
                got.sort();
                prop_assert_eq!(got, want);
            }
        }
    }
}
