//! Expert quality labels, the native quality classifier and the filter that
//! admits annotated samples into the final dataset.

mod features;
mod model;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{cmp_ids, AnnotatedSample};
use crate::par::{self, Execution};

pub use features::{FeatureSpec, SparseVec};
pub use model::{train, QualityClassifier, TrainConfig, TrainReport, ARTIFACT_VERSION};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("invalid quality config: {0}")]
    Config(String),
    #[error("training needs at least 2 examples per class (got {qualified} qualified, {unqualified} unqualified)")]
    InsufficientClasses { qualified: usize, unqualified: usize },
    #[error("classifier artifact: {0}")]
    Artifact(String),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("scorer: {0}")]
    Scorer(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Labels { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityVerdict {
    Qualified,
    Unqualified,
}

/// One rater's judgement of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLabel {
    pub sample_id: String,
    pub verdict: QualityVerdict,
    pub rater: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Reads a JSONL label file.
pub fn read_labels(path: &Path) -> Result<Vec<QualityLabel>, QualityError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| QualityError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| QualityError::Labels {
                path: path.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Keeps one label per (sample, rater): the latest by timestamp, ties going
/// to the later entry.
pub fn dedup_labels(labels: &[QualityLabel]) -> Vec<QualityLabel> {
    let mut latest: HashMap<(&str, &str), &QualityLabel> = HashMap::new();
    for l in labels {
        let key = (l.sample_id.as_str(), l.rater.as_str());
        match latest.get(&key) {
            Some(prev) if prev.timestamp > l.timestamp => {}
            _ => {
                latest.insert(key, l);
            }
        }
    }
    let mut out: Vec<QualityLabel> = latest.into_values().cloned().collect();
    out.sort_by(|a, b| cmp_ids(&a.sample_id, &b.sample_id).then_with(|| a.rater.cmp(&b.rater)));
    out
}

/// Votes for one sample and the resulting verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAggregate {
    pub qualified: usize,
    pub unqualified: usize,
    pub verdict: QualityVerdict,
}

impl LabelAggregate {
    pub fn unanimous(&self) -> bool {
        self.qualified == 0 || self.unqualified == 0
    }
}

/// Majority vote per sample; ties are unqualified.
pub fn aggregate_labels(labels: &[QualityLabel]) -> BTreeMap<String, LabelAggregate> {
    let mut votes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for l in dedup_labels(labels) {
        let e = votes.entry(l.sample_id).or_default();
        match l.verdict {
            QualityVerdict::Qualified => e.0 += 1,
            QualityVerdict::Unqualified => e.1 += 1,
        }
    }
    votes
        .into_iter()
        .map(|(id, (q, u))| {
            let verdict = if q > u { QualityVerdict::Qualified } else { QualityVerdict::Unqualified };
            (id, LabelAggregate { qualified: q, unqualified: u, verdict })
        })
        .collect()
}

/// Raw agreement counts across samples with at least two raters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub multi_rated: usize,
    pub unanimous: usize,
}

pub fn agreement(aggregates: &BTreeMap<String, LabelAggregate>) -> Agreement {
    let mut a = Agreement::default();
    for agg in aggregates.values().filter(|a| a.qualified + a.unqualified >= 2) {
        a.multi_rated += 1;
        if agg.unanimous() {
            a.unanimous += 1;
        }
    }
    a
}

/// Pairs each labelled sample's review text with its aggregated verdict.
/// Samples without labels are skipped.
pub fn labeled_examples(samples: &[AnnotatedSample], labels: &[QualityLabel]) -> Vec<(String, bool)> {
    let aggregates = aggregate_labels(labels);
    let mut sorted: Vec<&AnnotatedSample> = samples.iter().collect();
    sorted.sort_by(|a, b| cmp_ids(a.id(), b.id()));
    sorted
        .into_iter()
        .filter_map(|s| aggregates.get(s.id()).map(|a| (s.review_text(), a.verdict == QualityVerdict::Qualified)))
        .collect()
}

/// Anything that maps a sample's review text to a probability of being
/// qualified. Implementations must be deterministic.
pub trait Scorer: Sync {
    fn score(&self, text: &str) -> Result<f64, QualityError>;
}

impl Scorer for QualityClassifier {
    fn score(&self, text: &str) -> Result<f64, QualityError> {
        Ok(self.score_text(text))
    }
}

/// External scorer: `POST {base_url}/score` with `{"text": ...}` answering
/// `{"score": p}`.
#[cfg(feature = "http")]
#[derive(Debug)]
pub struct HttpScorer {
    client: reqwest::blocking::Client,
    url: String,
}

#[cfg(feature = "http")]
impl HttpScorer {
    pub fn new(base_url: &str, timeout: std::time::Duration) -> Result<Self, QualityError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| QualityError::Scorer(e.to_string()))?;
        Ok(HttpScorer { client, url: format!("{}/score", base_url.trim_end_matches('/')) })
    }
}

#[cfg(feature = "http")]
impl Scorer for HttpScorer {
    fn score(&self, text: &str) -> Result<f64, QualityError> {
        #[derive(Deserialize)]
        struct Reply {
            score: f64,
        }
        let err = |e: reqwest::Error| QualityError::Scorer(e.to_string());
        let reply: Reply = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(err)?
            .json()
            .map_err(err)?;
        if !(0.0..=1.0).contains(&reply.score) {
            return Err(QualityError::Scorer(format!("score {} outside [0, 1]", reply.score)));
        }
        Ok(reply.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: AnnotatedSample,
    pub score: f64,
}

/// Partition of the input by `score >= tau`; rejected samples keep their
/// scores for audit. Both halves are in canonical id order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub tau: f64,
    pub admitted: Vec<ScoredSample>,
    pub rejected: Vec<ScoredSample>,
}

/// Scores every sample and splits at `tau`. `tau = 0` admits everything;
/// values outside `[0, 1]` are rejected.
pub fn filter(
    scorer: &dyn Scorer,
    samples: &[AnnotatedSample],
    tau: f64,
    exec: Execution,
) -> Result<FilterResult, QualityError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(QualityError::Threshold(tau));
    }
    let scores = par::map(exec, samples, |s| scorer.score(&s.review_text()));
    let mut result = FilterResult { tau, ..Default::default() };
    for (sample, score) in samples.iter().zip(scores) {
        let scored = ScoredSample { sample: sample.clone(), score: score? };
        if scored.score >= tau {
            result.admitted.push(scored);
        } else {
            result.rejected.push(scored);
        }
    }
    result.admitted.sort_by(|a, b| cmp_ids(a.sample.id(), b.sample.id()));
    result.rejected.sort_by(|a, b| cmp_ids(a.sample.id(), b.sample.id()));
    Ok(result)
}
