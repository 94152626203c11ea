use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// One recorded completion. Stored as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub prompt_sha: String,
    pub completion: String,
    pub latency_ms: u64,
}

/// Fingerprint-keyed store of recorded completions, optionally backed by an
/// append-only JSONL file.
#[derive(Debug)]
pub struct Cassette {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, CassetteEntry>,
    order: Vec<String>,
    writer: Option<File>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Cassette { path: None, inner: Mutex::new(Inner::default()) }
    }

    /// Loads an existing cassette for replay.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let inner = Self::read_entries(path)?;
        Ok(Cassette { path: Some(path.to_path_buf()), inner: Mutex::new(inner) })
    }

    /// Opens (creating if needed) a cassette that new entries are appended to.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut inner = if path.exists() { Self::read_entries(path)? } else { Inner::default() };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        inner.writer = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(Cassette { path: Some(path.to_path_buf()), inner: Mutex::new(inner) })
    }

    fn read_entries(path: &Path) -> std::io::Result<Inner> {
        let mut inner = Inner::default();
        let reader = BufReader::new(File::open(path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            match inner.entries.get(&entry.fingerprint) {
                Some(existing) if existing.completion != entry.completion => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!(
                            "{}:{}: fingerprint {} recorded twice with different completions",
                            path.display(),
                            n + 1,
                            entry.fingerprint
                        ),
                    ));
                }
                Some(_) => {}
                None => {
                    inner.order.push(entry.fingerprint.clone());
                    inner.entries.insert(entry.fingerprint.clone(), entry);
                }
            }
        }
        Ok(inner)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, fingerprint: &str) -> Option<CassetteEntry> {
        self.inner.lock().unwrap().entries.get(fingerprint).cloned()
    }

    /// Adds an entry; returns `false` (and writes nothing) if the fingerprint
    /// is already present.
    pub fn insert(&self, entry: CassetteEntry) -> std::io::Result<bool> {
        let mut inner = self.inner.lock().unwrap();
        if inner.entries.contains_key(&entry.fingerprint) {
            return Ok(false);
        }
        if let Some(w) = inner.writer.as_mut() {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            w.write_all(line.as_bytes())?;
            w.flush()?;
        }
        inner.order.push(entry.fingerprint.clone());
        inner.entries.insert(entry.fingerprint.clone(), entry);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> Vec<CassetteEntry> {
        let inner = self.inner.lock().unwrap();
        inner.order.iter().map(|fp| inner.entries[fp].clone()).collect()
    }

    /// Writes all entries, sorted by fingerprint, to `path`.
    pub fn write_sorted(&self, path: &Path) -> std::io::Result<()> {
        let mut entries = self.entries();
        entries.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        let mut out = String::new();
        for e in entries {
            out.push_str(&serde_json::to_string(&e)?);
            out.push('\n');
        }
        std::fs::write(path, out)
    }
}
