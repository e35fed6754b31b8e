use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::teacher::{read_records, CompletionRecord};

/// Completions keyed by request digest, optionally backed by an append-only
/// line-delimited file. Entries are never overwritten.
#[derive(Debug, Default)]
pub struct AnnotationCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl AnnotationCache {
    pub fn in_memory() -> Self {
        AnnotationCache::default()
    }

    /// Open (or create) a cache file and load its entries. When a digest
    /// appears twice the first entry wins.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            for rec in read_records(BufReader::new(File::open(path)?))? {
                entries.entry(rec.digest).or_insert(rec.text);
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AnnotationCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store a completion unless the digest is already present. Returns the
    /// stored text, which is the earlier one on a race.
    pub fn insert(&self, digest: &str, text: &str) -> std::io::Result<String> {
        let mut file = self.file.lock().expect("cache file lock");
        {
            let entries = self.entries.read().expect("cache lock");
            if let Some(existing) = entries.get(digest) {
                return Ok(existing.clone());
            }
        }
        if let Some(f) = file.as_mut() {
            let rec = CompletionRecord {
                digest: digest.to_string(),
                text: text.to_string(),
            };
            let mut line = serde_json::to_vec(&rec).map_err(std::io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(digest.to_string(), text.to_string());
        Ok(text.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_persist_and_are_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = AnnotationCache::open(&path).unwrap();
            assert_eq!(cache.insert("d1", "one").unwrap(), "one");
            assert_eq!(cache.insert("d1", "other").unwrap(), "one");
        }
        let cache = AnnotationCache::open(&path).unwrap();
        assert_eq!(cache.get("d1").as_deref(), Some("one"));
        assert_eq!(cache.len(), 1);
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 1);
    }

    #[test]
    fn concurrent_writers_keep_one_entry_per_digest() {
        let cache = AnnotationCache::in_memory();
        std::thread::scope(|s| {
            for t in 0..8 {
                let cache = &cache;
                s.spawn(move || {
                    for i in 0..50 {
                        cache.insert(&format!("d{i}"), &format!("t{t}")).unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.len(), 50);
    }
}
