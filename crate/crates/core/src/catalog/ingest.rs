use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::Serialize;

use super::{Catalog, CatalogError, InteractionRecord, ItemRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Interactions,
    Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    pub source: RecordSource,
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IngestReport {
    pub total_lines: usize,
    pub malformed: Vec<LineError>,
    pub duplicates_dropped: usize,
    pub duplicate_items_dropped: usize,
    pub untitled_items_dropped: usize,
    pub unknown_item_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Abort when malformed lines exceed this fraction of all lines.
    pub max_error_rate: f64,
    pub provenance: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_error_rate: 0.01,
            provenance: "unnamed".to_string(),
        }
    }
}

fn validate_interaction(r: &InteractionRecord) -> Result<(), String> {
    if r.user_id.is_empty() {
        return Err("empty user id".into());
    }
    if r.item_id.is_empty() {
        return Err("empty item id".into());
    }
    if r.timestamp < 0 {
        return Err(format!("negative timestamp {}", r.timestamp));
    }
    if let Some(rating) = r.rating {
        if !(1.0..=5.0).contains(&rating) {
            return Err(format!("rating {rating} outside [1, 5]"));
        }
    }
    Ok(())
}

fn read_lines<T, R: BufRead>(
    reader: R,
    source: RecordSource,
    report: &mut IngestReport,
    validate: impl Fn(&T) -> Result<(), String>,
) -> Result<Vec<T>, CatalogError>
where
    T: serde::de::DeserializeOwned,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.total_lines += 1;
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| validate(&rec).map(|_| rec));
        match parsed {
            Ok(rec) => out.push(rec),
            Err(message) => report.malformed.push(LineError {
                source,
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(out)
}

/// Read line-delimited interaction and metadata records into a [`Catalog`].
///
/// Items without a title are dropped, interactions pointing at unknown items
/// are dropped, and repeated `(user, item, timestamp)` triples keep only the
/// first occurrence. Every drop is counted in the returned report.
pub fn ingest<I: BufRead, M: BufRead>(
    interactions: I,
    metadata: M,
    options: &IngestOptions,
) -> Result<(Catalog, IngestReport), CatalogError> {
    let mut report = IngestReport::default();
    let item_rows: Vec<ItemRecord> =
        read_lines(metadata, RecordSource::Metadata, &mut report, |r: &ItemRecord| {
            if r.item_id.is_empty() {
                Err("empty item id".into())
            } else {
                Ok(())
            }
        })?;
    let rows: Vec<InteractionRecord> = read_lines(
        interactions,
        RecordSource::Interactions,
        &mut report,
        validate_interaction,
    )?;

    if report.total_lines > 0 {
        let rate = report.malformed.len() as f64 / report.total_lines as f64;
        if rate > options.max_error_rate {
            return Err(CatalogError::ErrorRateExceeded {
                malformed: report.malformed.len(),
                total: report.total_lines,
                threshold: options.max_error_rate,
                report: Box::new(report),
            });
        }
    }

    let mut items = BTreeMap::new();
    for mut item in item_rows {
        item.title = item.title.trim().to_string();
        if item.title.is_empty() {
            report.untitled_items_dropped += 1;
            continue;
        }
        if items.contains_key(&item.item_id) {
            report.duplicate_items_dropped += 1;
            continue;
        }
        items.insert(item.item_id.clone(), item);
    }
    if report.untitled_items_dropped > 0 {
        log::warn!("dropped {} items without a title", report.untitled_items_dropped);
    }

    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        if !items.contains_key(&row.item_id) {
            report.unknown_item_dropped += 1;
            continue;
        }
        if !seen.insert((row.user_id.clone(), row.item_id.clone(), row.timestamp)) {
            report.duplicates_dropped += 1;
            continue;
        }
        kept.push(row);
    }
    if report.unknown_item_dropped > 0 {
        log::warn!(
            "dropped {} interactions referencing unknown items",
            report.unknown_item_dropped
        );
    }

    Ok((
        Catalog {
            items,
            interactions: kept,
            provenance: options.provenance.clone(),
        },
        report,
    ))
}
