use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use cogchain::chain::cmp_ids;
use cogchain::eval::RatingRecord;
use cogchain::quality::{QualityLabel, QualityVerdict};
use serde::{Deserialize, Serialize};

/// Explanation scores in aspect order: comprehension, depth, relevance,
/// logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectScores {
    pub comprehension: u8,
    pub depth: u8,
    pub relevance: u8,
    pub logic: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Quality,
    Aspects,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Quality { verdict: QualityVerdict },
    Aspects { scores: AspectScores },
}

impl Payload {
    pub fn kind(&self) -> LabelKind {
        match self {
            Payload::Quality { .. } => LabelKind::Quality,
            Payload::Aspects { .. } => LabelKind::Aspects,
        }
    }
}

/// One submission, as appended to the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub seq: u64,
    pub rater: String,
    pub sample_id: String,
    pub timestamp: u64,
    #[serde(flatten)]
    pub payload: Payload,
    /// Sequence number of the submission this one replaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaces: Option<u64>,
}

/// Append-only JSONL log of submissions. A later submission for the same
/// (rater, sample, kind) supersedes the earlier one; both stay in the log.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    events: Vec<LabelEvent>,
    /// Index into `events` of the current submission per key.
    current: BTreeMap<(String, String, LabelKind), usize>,
}

impl LabelStore {
    /// Opens the log, replaying whatever it already holds.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut store = LabelStore {
            path: path.to_path_buf(),
            file: OpenOptions::new().create(true).append(true).open(path)?,
            events: Vec::new(),
            current: BTreeMap::new(),
        };
        let text = std::fs::read_to_string(path)?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let event: LabelEvent = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            store.index(event);
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn index(&mut self, event: LabelEvent) {
        let key = (event.rater.clone(), event.sample_id.clone(), event.payload.kind());
        self.current.insert(key, self.events.len());
        self.events.push(event);
    }

    /// Appends a submission and returns it as stored.
    pub fn append(&mut self, rater: &str, sample_id: &str, payload: Payload, now: u64) -> std::io::Result<LabelEvent> {
        let key = (rater.to_string(), sample_id.to_string(), payload.kind());
        let previous = self.current.get(&key).map(|&i| &self.events[i]);
        let event = LabelEvent {
            seq: self.events.last().map_or(1, |e| e.seq + 1),
            rater: rater.to_string(),
            sample_id: sample_id.to_string(),
            // never earlier than what it replaces, so latest-wins readers agree
            timestamp: previous.map_or(now, |p| now.max(p.timestamp)),
            payload,
            replaces: previous.map(|p| p.seq),
        };
        let mut line = serde_json::to_string(&event).map_err(std::io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.index(event.clone());
        Ok(event)
    }

    pub fn history(&self) -> &[LabelEvent] {
        &self.events
    }

    /// Current submissions, sorted by sample id then rater.
    pub fn current(&self, kind: LabelKind) -> Vec<&LabelEvent> {
        let mut out: Vec<&LabelEvent> =
            self.current.iter().filter(|(k, _)| k.2 == kind).map(|(_, &i)| &self.events[i]).collect();
        out.sort_by(|a, b| cmp_ids(&a.sample_id, &b.sample_id).then_with(|| a.rater.cmp(&b.rater)));
        out
    }

    pub fn labeled_by(&self, rater: &str, kind: LabelKind) -> HashSet<&str> {
        self.current.keys().filter(|k| k.0 == rater && k.2 == kind).map(|k| k.1.as_str()).collect()
    }

    pub fn quality_labels(&self) -> Vec<QualityLabel> {
        self.current(LabelKind::Quality)
            .into_iter()
            .filter_map(|e| match e.payload {
                Payload::Quality { verdict } => Some(QualityLabel {
                    sample_id: e.sample_id.clone(),
                    verdict,
                    rater: e.rater.clone(),
                    timestamp: e.timestamp,
                }),
                Payload::Aspects { .. } => None,
            })
            .collect()
    }

    pub fn ratings(&self) -> Vec<RatingRecord> {
        self.current(LabelKind::Aspects)
            .into_iter()
            .filter_map(|e| match e.payload {
                Payload::Aspects { scores } => Some(RatingRecord {
                    rater: e.rater.clone(),
                    sample_id: e.sample_id.clone(),
                    co: scores.comprehension,
                    de: scores.depth,
                    re: scores.relevance,
                    lo: scores.logic,
                }),
                Payload::Quality { .. } => None,
            })
            .collect()
    }
}
