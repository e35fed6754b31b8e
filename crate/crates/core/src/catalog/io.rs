//! Line-delimited JSON manifests for catalogs, sequences and splits.
//!
//! Every manifest starts with a [`ManifestHeader`] line carrying the schema
//! version, generation seed and a digest of the inputs that produced it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    Catalog, CatalogError, InteractionRecord, ItemRecord, LeaveOneOutSplit, ProductSearchSplit, QueryPair,
    SplitPart, UserSequence, UserSplit,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub kind: String,
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub provenance: String,
    pub input_digest: String,
}

impl ManifestHeader {
    pub fn new(kind: &str, seed: Option<u64>, provenance: &str, input_digest: &str) -> Self {
        ManifestHeader {
            kind: kind.to_string(),
            schema_version: SCHEMA_VERSION,
            seed,
            provenance: provenance.to_string(),
            input_digest: input_digest.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum CatalogLine {
    Item(ItemRecord),
    Interaction(InteractionRecord),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LooLine {
    User(UserSplit),
    Excluded {
        #[serde(rename = "user")]
        user_id: String,
    },
}

#[derive(Serialize, Deserialize)]
struct SearchLine {
    part: SplitPart,
    #[serde(flatten)]
    pair: QueryPair,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), CatalogError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CatalogError::Manifest(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(line: &str, n: usize) -> Result<T, CatalogError> {
    serde_json::from_str(line).map_err(|e| CatalogError::Manifest(format!("line {n}: {e}")))
}

/// Read the header line and hand every following non-empty line to `each`.
fn read_manifest<R: BufRead>(
    reader: R,
    expected_kind: &str,
    mut each: impl FnMut(&str, usize) -> Result<(), CatalogError>,
) -> Result<ManifestHeader, CatalogError> {
    let mut header: Option<ManifestHeader> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => {
                let h: ManifestHeader = parse(&line, idx + 1)?;
                if h.kind != expected_kind {
                    return Err(CatalogError::Manifest(format!(
                        "expected a {expected_kind} manifest, found {}",
                        h.kind
                    )));
                }
                if h.schema_version != SCHEMA_VERSION {
                    return Err(CatalogError::Manifest(format!(
                        "unsupported schema version {}",
                        h.schema_version
                    )));
                }
                header = Some(h);
            }
            Some(_) => each(&line, idx + 1)?,
        }
    }
    header.ok_or_else(|| CatalogError::Manifest("missing header".into()))
}

/// Parse only the header of a manifest.
pub fn read_header<R: BufRead>(reader: R) -> Result<ManifestHeader, CatalogError> {
    let mut first = String::new();
    let mut reader = reader;
    while first.trim().is_empty() {
        first.clear();
        if reader.read_line(&mut first)? == 0 {
            return Err(CatalogError::Manifest("missing header".into()));
        }
    }
    parse(&first, 1)
}

pub fn write_catalog<W: Write>(
    w: &mut W,
    catalog: &Catalog,
    header: &ManifestHeader,
) -> Result<(), CatalogError> {
    write_line(w, header)?;
    for item in catalog.items.values() {
        write_line(w, &CatalogLine::Item(item.clone()))?;
    }
    for row in &catalog.interactions {
        write_line(w, &CatalogLine::Interaction(row.clone()))?;
    }
    Ok(())
}

pub fn read_catalog<R: BufRead>(reader: R) -> Result<(ManifestHeader, Catalog), CatalogError> {
    let mut catalog = Catalog::default();
    let header = read_manifest(reader, "catalog", |line, n| {
        match parse::<CatalogLine>(line, n)? {
            CatalogLine::Item(item) => {
                catalog.items.insert(item.item_id.clone(), item);
            }
            CatalogLine::Interaction(row) => catalog.interactions.push(row),
        }
        Ok(())
    })?;
    catalog.provenance = header.provenance.clone();
    Ok((header, catalog))
}

pub fn write_sequences<W: Write>(
    w: &mut W,
    sequences: &[UserSequence],
    header: &ManifestHeader,
) -> Result<(), CatalogError> {
    write_line(w, header)?;
    for seq in sequences {
        write_line(w, seq)?;
    }
    Ok(())
}

pub fn read_sequences<R: BufRead>(reader: R) -> Result<(ManifestHeader, Vec<UserSequence>), CatalogError> {
    let mut out = Vec::new();
    let header = read_manifest(reader, "sequences", |line, n| {
        out.push(parse(line, n)?);
        Ok(())
    })?;
    Ok((header, out))
}

pub fn write_loo_split<W: Write>(
    w: &mut W,
    split: &LeaveOneOutSplit,
    header: &ManifestHeader,
) -> Result<(), CatalogError> {
    write_line(w, header)?;
    for user in &split.users {
        write_line(w, &LooLine::User(user.clone()))?;
    }
    for user_id in &split.excluded {
        write_line(
            w,
            &LooLine::Excluded {
                user_id: user_id.clone(),
            },
        )?;
    }
    Ok(())
}

pub fn read_loo_split<R: BufRead>(reader: R) -> Result<(ManifestHeader, LeaveOneOutSplit), CatalogError> {
    let mut split = LeaveOneOutSplit::default();
    let header = read_manifest(reader, "split_leave_one_out", |line, n| {
        match parse::<LooLine>(line, n)? {
            LooLine::User(u) => split.users.push(u),
            LooLine::Excluded { user_id } => split.excluded.push(user_id),
        }
        Ok(())
    })?;
    Ok((header, split))
}

pub fn write_search_split<W: Write>(
    w: &mut W,
    split: &ProductSearchSplit,
    header: &ManifestHeader,
) -> Result<(), CatalogError> {
    write_line(w, header)?;
    for part in [SplitPart::Train, SplitPart::Validation, SplitPart::Test] {
        for pair in split.part(part) {
            write_line(
                w,
                &SearchLine {
                    part,
                    pair: pair.clone(),
                },
            )?;
        }
    }
    Ok(())
}

pub fn read_search_split<R: BufRead>(
    reader: R,
) -> Result<(ManifestHeader, ProductSearchSplit), CatalogError> {
    let mut split = ProductSearchSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed: 0,
    };
    let header = read_manifest(reader, "split_product_search", |line, n| {
        let l: SearchLine = parse(line, n)?;
        match l.part {
            SplitPart::Train => split.train.push(l.pair),
            SplitPart::Validation => split.validation.push(l.pair),
            SplitPart::Test => split.test.push(l.pair),
        }
        Ok(())
    })?;
    split.seed = header.seed.unwrap_or(0);
    Ok((header, split))
}
