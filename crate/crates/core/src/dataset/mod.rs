//! Corpus ingestion, splits, statistics and instruction-tuning export.

mod export;
mod stats;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{cmp_ids, Post, Split, StressVerdict};

pub use export::{
    export_alpaca, mask_spans, revalidate_export, sidecar_path, AlpacaRecord, ExportError, ExportOptions,
    ExportSummary, LossMaskSpec, MaskSpans, INSTRUCTION_SEPARATOR,
};
pub use stats::{stats, stats_for_samples, CorpusStats, SampleStats, TokenStats};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: u64, field: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: u64, label: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("split: {0}")]
    Split(String),
    #[error("unsupported corpus format for {0} (expected .csv, .jsonl or .json)")]
    Format(String),
}

/// Maps a raw label to a verdict; accepts stressed/non-stressed, 1/0 and
/// yes/no in any case.
pub fn parse_label(raw: &str) -> Option<StressVerdict> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "stressed" | "1" | "yes" => Some(StressVerdict::Stressed),
        "non-stressed" | "0" | "no" => Some(StressVerdict::NonStressed),
        _ => None,
    }
}

/// Hex SHA-256 over the posts in canonical id order. Input order does not
/// matter.
pub fn corpus_fingerprint(posts: &[Post]) -> String {
    let mut sorted: Vec<&Post> = posts.iter().collect();
    sorted.sort_by(|a, b| cmp_ids(&a.id, &b.id));
    let mut h = Sha256::new();
    for p in sorted {
        h.update(serde_json::to_string(p).expect("posts serialize").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Named split ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPreset {
    /// 2,838 / 358 / 357 of 3,553 posts.
    Dreaddit,
    /// 2,475 / 307 / 316 of 3,098 posts.
    Wbsd,
}

impl SplitPreset {
    /// (train, validation) fractions; test takes the rest.
    pub fn ratios(self) -> (f64, f64) {
        match self {
            SplitPreset::Dreaddit => (2838.0 / 3553.0, 358.0 / 3553.0),
            SplitPreset::Wbsd => (2475.0 / 3098.0, 307.0 / 3098.0),
        }
    }
}

impl std::str::FromStr for SplitPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dreaddit" => Ok(SplitPreset::Dreaddit),
            "wbsd" => Ok(SplitPreset::Wbsd),
            other => Err(format!("unknown split preset {other:?}")),
        }
    }
}

/// How posts are assigned to splits.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// A CSV (`id,split`) or JSONL (`{"id","split"}`) file naming every post's split.
    Sidecar(PathBuf),
    /// Seeded shuffle of the canonical id order, cut at
    /// `round(n*train)` and `round(n*train) + round(n*validation)`.
    Ratios { train: f64, validation: f64, seed: u64 },
    /// Every post in one split.
    All(Split),
}

impl SplitSpec {
    pub fn preset(preset: SplitPreset, seed: u64) -> Self {
        let (train, validation) = preset.ratios();
        SplitSpec::Ratios { train, validation, seed }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratios { train: 0.8, validation: 0.1, seed: 0 }
    }
}

/// Split sizes for `n` posts under the given fractions.
pub fn split_sizes(n: usize, train: f64, validation: f64) -> (usize, usize, usize) {
    let t = ((n as f64) * train).round() as usize;
    let v = (((n as f64) * validation).round() as usize).min(n - t.min(n));
    let t = t.min(n);
    (t, v, n - t - v)
}

/// Column/field names and split policy for [`ingest`].
#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Corpus name; also the `source` of every post. Defaults to the file stem.
    pub name: Option<String>,
    pub id_field: String,
    pub text_field: String,
    pub label_field: String,
    pub split: SplitSpec,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            name: None,
            id_field: "id".into(),
            text_field: "text".into(),
            label_field: "label".into(),
            split: SplitSpec::default(),
        }
    }
}

/// Counts from one ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    /// Rows dropped because their text was empty.
    pub rejected_empty: usize,
    pub rejected_lines: Vec<u64>,
}

/// A named set of posts with disjoint splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub posts: Vec<Post>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Corpus {
    /// Builds a corpus; posts are kept in canonical id order.
    pub fn new(name: impl Into<String>, mut posts: Vec<Post>) -> Result<Self, IngestError> {
        posts.sort_by(|a, b| cmp_ids(&a.id, &b.id));
        if let Some(w) = posts.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(IngestError::DuplicateId(w[0].id.clone()));
        }
        Ok(Corpus { name: name.into(), posts })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        corpus_fingerprint(&self.posts)
    }

    pub fn split_sizes(&self) -> SplitSizes {
        let mut s = SplitSizes::default();
        for p in &self.posts {
            match p.split {
                Split::Train => s.train += 1,
                Split::Validation => s.validation += 1,
                Split::Test => s.test += 1,
            }
        }
        s
    }

    pub fn split(&self, split: Split) -> Vec<Post> {
        self.posts.iter().filter(|p| p.split == split).cloned().collect()
    }

    /// Writes one Post per line.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for p in &self.posts {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        std::fs::write(path, out)
    }

    /// Reads a file written by [`Corpus::save`]; the name is the file stem.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let mut posts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(line)
                .map_err(|e| IngestError::Malformed { line: n as u64 + 1, message: e.to_string() })?;
            posts.push(post);
        }
        Corpus::new(stem(path), posts)
    }
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into())
}

struct RawRow {
    line: u64,
    id: Option<String>,
    text: String,
    label: String,
}

/// Reads a CSV or JSONL corpus file, normalizes labels and assigns splits.
pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<(Corpus, IngestReport), IngestError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let rows = match ext.as_str() {
        "csv" => read_csv(path, opts)?,
        "jsonl" | "json" => read_jsonl(path, opts)?,
        _ => return Err(IngestError::Format(path.display().to_string())),
    };
    let name = opts.name.clone().unwrap_or_else(|| stem(path));
    let mut report = IngestReport { rows: rows.len(), ..Default::default() };
    let mut drafts = Vec::with_capacity(rows.len());
    for (index, row) in rows.into_iter().enumerate() {
        let verdict = parse_label(&row.label)
            .ok_or_else(|| IngestError::UnknownLabel { line: row.line, label: row.label.clone() })?;
        if row.text.trim().is_empty() {
            report.rejected_empty += 1;
            report.rejected_lines.push(row.line);
            continue;
        }
        let id = row.id.filter(|s| !s.trim().is_empty()).unwrap_or_else(|| index.to_string());
        drafts.push((id, row.text, verdict));
    }
    let mut seen = HashSet::new();
    for (id, _, _) in &drafts {
        if !seen.insert(id.as_str()) {
            return Err(IngestError::DuplicateId(id.clone()));
        }
    }
    let ids: Vec<&str> = drafts.iter().map(|(id, _, _)| id.as_str()).collect();
    let splits = assign_splits(&ids, &opts.split)?;
    let posts = drafts
        .iter()
        .map(|(id, text, verdict)| {
            Post::new(id.clone(), text.clone(), *verdict, name.clone(), splits[id.as_str()])
                .expect("blank texts were rejected above")
        })
        .collect::<Vec<_>>();
    report.accepted = posts.len();
    Ok((Corpus::new(name, posts)?, report))
}

fn read_csv(path: &Path, opts: &IngestOptions) -> Result<Vec<RawRow>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col =
        column(&opts.text_field).ok_or(IngestError::MissingField { line: 1, field: opts.text_field.clone() })?;
    let label_col =
        column(&opts.label_field).ok_or(IngestError::MissingField { line: 1, field: opts.label_field.clone() })?;
    let id_col = column(&opts.id_field);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |col: usize, field: &str| {
            record.get(col).map(str::to_string).ok_or(IngestError::MissingField { line, field: field.to_string() })
        };
        rows.push(RawRow {
            line,
            id: id_col.and_then(|c| record.get(c)).map(str::to_string),
            text: get(text_col, &opts.text_field)?,
            label: get(label_col, &opts.label_field)?,
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io { path: path.display().to_string(), source },
        kind => IngestError::Malformed { line, message: format!("{kind:?}") },
    }
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl(path: &Path, opts: &IngestOptions) -> Result<Vec<RawRow>, IngestError> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| IngestError::Malformed { line: line_no, message: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| IngestError::Malformed { line: line_no, message: "expected a JSON object".into() })?;
        let field = |name: &str| {
            obj.get(name)
                .filter(|v| !v.is_null())
                .map(|v| {
                    scalar(v).ok_or_else(|| IngestError::Malformed {
                        line: line_no,
                        message: format!("field `{name}` must be a string or number"),
                    })
                })
                .transpose()
        };
        rows.push(RawRow {
            line: line_no,
            id: field(&opts.id_field)?,
            text: field(&opts.text_field)?
                .ok_or(IngestError::MissingField { line: line_no, field: opts.text_field.clone() })?,
            label: field(&opts.label_field)?
                .ok_or(IngestError::MissingField { line: line_no, field: opts.label_field.clone() })?,
        });
    }
    Ok(rows)
}

fn assign_splits<'a>(ids: &[&'a str], spec: &SplitSpec) -> Result<HashMap<&'a str, Split>, IngestError> {
    match spec {
        SplitSpec::All(split) => Ok(ids.iter().map(|id| (*id, *split)).collect()),
        SplitSpec::Ratios { train, validation, seed } => {
            if !(0.0..=1.0).contains(train) || !(0.0..=1.0).contains(validation) || train + validation > 1.0 + 1e-12 {
                return Err(IngestError::Split(format!(
                    "ratios train={train} validation={validation} must be in [0,1] and sum to at most 1"
                )));
            }
            let mut order: Vec<&str> = ids.to_vec();
            order.sort_by(|a, b| cmp_ids(a, b));
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let (t, v, _) = split_sizes(order.len(), *train, *validation);
            Ok(order
                .into_iter()
                .enumerate()
                .map(|(i, id)| {
                    let split = if i < t {
                        Split::Train
                    } else if i < t + v {
                        Split::Validation
                    } else {
                        Split::Test
                    };
                    (id, split)
                })
                .collect())
        }
        SplitSpec::Sidecar(path) => {
            let table = read_split_sidecar(path)?;
            ids.iter()
                .map(|id| {
                    table
                        .get(*id)
                        .map(|s| (*id, *s))
                        .ok_or_else(|| IngestError::Split(format!("{} has no entry for id {id:?}", path.display())))
                })
                .collect()
        }
    }
}

fn read_split_sidecar(path: &Path) -> Result<HashMap<String, Split>, IngestError> {
    let text = read(path)?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl" || e == "json");
    let mut table = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, split) = if is_jsonl {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| IngestError::Malformed { line: line_no, message: e.to_string() })?;
            let id = v.get("id").and_then(scalar);
            let split = v.get("split").and_then(|s| s.as_str()).map(str::to_string);
            match (id, split) {
                (Some(id), Some(split)) => (id, split),
                _ => {
                    return Err(IngestError::Malformed {
                        line: line_no,
                        message: "expected {\"id\", \"split\"}".into(),
                    })
                }
            }
        } else {
            let mut parts = line.splitn(2, ',');
            let id = parts.next().unwrap_or("").trim().to_string();
            let split = parts.next().unwrap_or("").trim().to_string();
            if n == 0 && id == "id" {
                continue;
            }
            (id, split)
        };
        let split: Split = split
            .parse()
            .map_err(|_| IngestError::Malformed { line: line_no, message: format!("unknown split {split:?}") })?;
        if table.insert(id.clone(), split).is_some() {
            return Err(IngestError::Split(format!("{} lists id {id:?} twice", path.display())));
        }
    }
    Ok(table)
}
