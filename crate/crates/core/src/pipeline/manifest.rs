use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::Stage;

/// Per-stage accounting.
///
/// For the generate and self-reflect stages
/// `attempted = verdict_correct + verdict_incorrect + parse_failed`, and the
/// incorrect and unparseable samples are forwarded to the next stage. For the
/// answer-reflect stage `attempted = verdict_correct + dropped`, and
/// `verdict_incorrect`/`parse_failed` record why the dropped samples failed on
/// their final attempt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounters {
    pub attempted: u64,
    pub verdict_correct: u64,
    pub verdict_incorrect: u64,
    pub parse_failed: u64,
    pub dropped: u64,
}

impl StageCounters {
    /// Samples handed on to the next stage.
    pub fn forwarded(&self) -> u64 {
        self.verdict_incorrect + self.parse_failed - self.dropped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTable {
    pub generate: StageCounters,
    pub self_reflect: StageCounters,
    pub answer_reflect: StageCounters,
}

impl StageTable {
    pub fn get(&self, stage: Stage) -> &StageCounters {
        match stage {
            Stage::Generate => &self.generate,
            Stage::SelfReflect => &self.self_reflect,
            Stage::AnswerReflect => &self.answer_reflect,
        }
    }

    pub fn get_mut(&mut self, stage: Stage) -> &mut StageCounters {
        match stage {
            Stage::Generate => &mut self.generate,
            Stage::SelfReflect => &mut self.self_reflect,
            Stage::AnswerReflect => &mut self.answer_reflect,
        }
    }
}

/// Configuration values that determine a run's outputs. A resume is refused
/// when any of them differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub examples: usize,
    pub retry_budget: u32,
    pub template_version: String,
}

impl ConfigSnapshot {
    /// Human-readable differences, one line per changed field.
    pub fn diff(&self, current: &ConfigSnapshot) -> Vec<String> {
        let mut out = Vec::new();
        let mut cmp = |name: &str, old: String, new: String| {
            if old != new {
                out.push(format!("{name}: run has {old:?}, config has {new:?}"));
            }
        };
        cmp("base_url", self.base_url.clone(), current.base_url.clone());
        cmp("model_name", self.model_name.clone(), current.model_name.clone());
        cmp("temperature", self.temperature.to_string(), current.temperature.to_string());
        cmp("examples", self.examples.to_string(), current.examples.to_string());
        cmp("retry_budget", self.retry_budget.to_string(), current.retry_budget.to_string());
        cmp("template_version", self.template_version.clone(), current.template_version.clone());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Deferred,
    Complete,
}

/// Last committed position: a stage and the canonical id within it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub stage: Stage,
    pub sample_id: String,
}

/// The sample that stopped a run because its requests kept failing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeferredSample {
    pub stage: Stage,
    pub sample_id: String,
    pub error: String,
}

/// Persistent state of one annotation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus_fingerprint: String,
    pub total_samples: u64,
    pub status: RunStatus,
    pub cursor: Option<Cursor>,
    pub stages: StageTable,
    pub total_correct: u64,
    pub total_dropped: u64,
    /// Samples that failed a stage and have not yet been attempted by the next.
    pub pending: u64,
    pub deferred: Option<DeferredSample>,
    pub config: ConfigSnapshot,
}

impl RunManifest {
    pub fn new(run_id: String, corpus_fingerprint: String, total_samples: u64, config: ConfigSnapshot) -> Self {
        RunManifest {
            run_id,
            corpus_fingerprint,
            total_samples,
            status: RunStatus::Running,
            cursor: None,
            stages: StageTable::default(),
            total_correct: 0,
            total_dropped: 0,
            pending: 0,
            deferred: None,
            config,
        }
    }

    pub(crate) fn refresh_totals(&mut self) {
        let s = &self.stages;
        self.total_correct =
            s.generate.verdict_correct + s.self_reflect.verdict_correct + s.answer_reflect.verdict_correct;
        self.total_dropped = s.answer_reflect.dropped;
        self.pending = (s.generate.forwarded() - s.self_reflect.attempted)
            + (s.self_reflect.forwarded() - s.answer_reflect.attempted);
    }

    /// Checks every accounting identity; returns the first violated one.
    pub fn check_conservation(&self) -> Result<(), String> {
        let s = &self.stages;
        for stage in [Stage::Generate, Stage::SelfReflect] {
            let c = s.get(stage);
            if c.attempted != c.verdict_correct + c.verdict_incorrect + c.parse_failed {
                return Err(format!("{stage}: attempted != correct + incorrect + parse_failed"));
            }
            if c.dropped != 0 {
                return Err(format!("{stage}: only the answer-reflect stage drops samples"));
            }
        }
        let a = &s.answer_reflect;
        if a.attempted != a.verdict_correct + a.dropped || a.dropped != a.verdict_incorrect + a.parse_failed {
            return Err("answer_reflect: attempted != correct + dropped".into());
        }
        if s.self_reflect.attempted > s.generate.forwarded() {
            return Err("self_reflect attempted more samples than generate forwarded".into());
        }
        if a.attempted > s.self_reflect.forwarded() {
            return Err("answer_reflect attempted more samples than self_reflect forwarded".into());
        }
        let correct = s.generate.verdict_correct + s.self_reflect.verdict_correct + a.verdict_correct;
        let pending = (s.generate.forwarded() - s.self_reflect.attempted) + (s.self_reflect.forwarded() - a.attempted);
        if correct != self.total_correct || a.dropped != self.total_dropped || pending != self.pending {
            return Err("stored totals disagree with stage counters".into());
        }
        if correct + a.dropped + pending != s.generate.attempted {
            return Err(format!(
                "conservation violated: {correct} correct + {} dropped + {pending} pending != {} attempted",
                a.dropped, s.generate.attempted
            ));
        }
        if s.generate.attempted > self.total_samples {
            return Err("more samples attempted than the corpus holds".into());
        }
        if self.status == RunStatus::Complete && (pending != 0 || s.generate.attempted != self.total_samples) {
            return Err("complete run has unprocessed samples".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Writes via a temporary file and rename so readers never see a torn
    /// manifest.
    pub fn store(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)
    }
}
