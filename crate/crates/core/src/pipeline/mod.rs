//! Three-stage self-reflective annotation.
//!
//! Stage 1 asks for a cognition chain; chains whose verdict misses the gold
//! label (or that never parse) go to stage 2, which asks the model to revise
//! its reasoning without revealing the answer; the remainder goes to stage 3,
//! which supplies the gold verdict. Stage 3 results that still disagree after
//! the retry budget are dropped.
//!
//! [`Annotator`] offers each stage as an in-memory list operation and
//! [`Annotator::run`]/[`Annotator::resume`] as a persistent, resumable run.

mod manifest;
mod run;

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{cmp_ids, parse_chain, AnnotatedSample, CognitionChain, Post, Stage};
use crate::gateway::{Gateway, GatewayError};
use crate::par::WorkerPool;
use crate::prompt::{FewShotExample, TemplateSet};

pub use manifest::{ConfigSnapshot, Cursor, DeferredSample, RunManifest, RunStatus, StageCounters, StageTable};
pub use run::{derive_run_id, load_outcomes, load_samples, RunLayout};

fn default_examples() -> usize {
    crate::prompt::DEFAULT_EXAMPLE_COUNT
}
fn default_retry_budget() -> u32 {
    3
}
fn default_workers() -> usize {
    4
}
fn default_batch_size() -> usize {
    32
}
fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Annotation settings (the `[annotate]` table of a config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    /// Few-shot examples included in the stage-1 prompt.
    #[serde(default = "default_examples")]
    pub examples: usize,
    /// Extra attempts after a parse failure (and, at stage 3, a mismatch).
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    /// Concurrent requests within a stage.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Samples per manifest flush.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    /// Template directory; the built-in templates when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            examples: default_examples(),
            retry_budget: default_retry_budget(),
            workers: default_workers(),
            batch_size: default_batch_size(),
            runs_dir: default_runs_dir(),
            templates: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("invalid annotate config: {0}")]
    Config(String),
    #[error("duplicate sample id {0:?} in corpus")]
    DuplicateId(String),
    #[error("{stage} request for sample {sample_id} failed; run deferred at this sample: {source}")]
    Deferred {
        stage: Stage,
        sample_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("config differs from the run's snapshot:\n  {}", .diff.join("\n  "))]
    ConfigDrift { diff: Vec<String> },
    #[error("corpus fingerprint {found} does not match the run's {expected}")]
    CorpusDrift { expected: String, found: String },
    #[error("no run {run_id} under {dir}")]
    UnknownRun { run_id: String, dir: String },
    #[error("run directory is inconsistent: {0}")]
    CorruptRun(String),
    #[error("run {run_id} already exists; resume it instead")]
    RunExists { run_id: String },
    #[error("run interrupted after a commit")]
    Interrupted,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Result of parsing one completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { chain: CognitionChain, verdict_match: bool },
    Failed { error: String },
}

/// The final attempt of one sample at one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub sample_id: String,
    pub stage: Stage,
    /// Completions requested for this sample at this stage.
    pub attempts: u32,
    pub raw_completion: String,
    pub parse: ParseOutcome,
}

impl StageOutcome {
    /// Defined only when the completion parsed.
    pub fn verdict_match(&self) -> Option<bool> {
        match &self.parse {
            ParseOutcome::Parsed { verdict_match, .. } => Some(*verdict_match),
            ParseOutcome::Failed { .. } => None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.verdict_match() == Some(true)
    }

    pub fn chain(&self) -> Option<&CognitionChain> {
        match &self.parse {
            ParseOutcome::Parsed { chain, .. } => Some(chain),
            ParseOutcome::Failed { .. } => None,
        }
    }
}

/// Observer invoked after every commit with the freshly written manifest.
/// Returning `Break` stops the run as if the process had been killed.
pub type CommitObserver<'a> = dyn FnMut(&RunManifest) -> ControlFlow<()> + 'a;

/// Drives the three stages against a gateway.
pub struct Annotator {
    cfg: AnnotateConfig,
    gateway: Arc<Gateway>,
    templates: TemplateSet,
    pool: WorkerPool,
}

impl std::fmt::Debug for Annotator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Annotator").field("cfg", &self.cfg).field("gateway", &self.gateway).finish()
    }
}

/// Outcome of processing one sample, before commit.
enum Processed {
    Done(StageOutcome),
    Failed(GatewayError),
    Skipped,
}

impl Annotator {
    pub fn new(cfg: AnnotateConfig, gateway: Arc<Gateway>, templates: TemplateSet) -> Result<Self, AnnotateError> {
        if cfg.batch_size == 0 {
            return Err(AnnotateError::Config("batch_size must be > 0".into()));
        }
        if cfg.examples > templates.chain_examples().len() {
            return Err(AnnotateError::Config(format!(
                "examples = {} but the template set ships {}",
                cfg.examples,
                templates.chain_examples().len()
            )));
        }
        let pool = WorkerPool::new(cfg.workers);
        Ok(Annotator { cfg, gateway, templates, pool })
    }

    pub fn config(&self) -> &AnnotateConfig {
        &self.cfg
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        let e = self.gateway.config();
        ConfigSnapshot {
            base_url: e.base_url.clone(),
            model_name: e.model_name.clone(),
            temperature: e.temperature,
            examples: self.cfg.examples,
            retry_budget: self.cfg.retry_budget,
            template_version: self.templates.version().to_string(),
        }
    }

    fn examples(&self) -> &[FewShotExample] {
        self.templates.default_examples(self.cfg.examples)
    }

    /// Stage-1 prompt for a post.
    pub fn generate_prompt(&self, post: &Post) -> String {
        self.templates.render_cogchain(self.examples(), &post.text)
    }

    fn prompt(&self, stage: Stage, post: &Post, prior: Option<&StageOutcome>) -> String {
        let prior = prior.map(|o| o.raw_completion.as_str()).unwrap_or("");
        match stage {
            Stage::Generate => self.generate_prompt(post),
            Stage::SelfReflect => self.templates.render_self_reflect(&post.text, prior),
            Stage::AnswerReflect => self.templates.render_answer_reflect(&post.text, prior, post.gold_label),
        }
    }

    /// Runs one sample through one stage, retrying as the stage allows.
    fn process(&self, stage: Stage, post: &Post, prior: Option<&StageOutcome>) -> Result<StageOutcome, GatewayError> {
        let prompt = self.prompt(stage, post, prior);
        let mut attempts = 0;
        let mut last = None;
        for attempt in 0..=self.cfg.retry_budget {
            let salt = if attempt == 0 { String::new() } else { format!("attempt={attempt}") };
            let completion = self.gateway.complete_salted(&prompt, &salt)?;
            attempts += 1;
            let parse = match parse_chain(&completion.text) {
                Ok(chain) => {
                    let verdict_match = chain.verdict() == post.gold_label;
                    ParseOutcome::Parsed { chain, verdict_match }
                }
                Err(e) => ParseOutcome::Failed { error: e.to_string() },
            };
            let retry = match &parse {
                ParseOutcome::Failed { .. } => true,
                ParseOutcome::Parsed { verdict_match, .. } => stage == Stage::AnswerReflect && !verdict_match,
            };
            last = Some((completion.text, parse));
            if !retry {
                break;
            }
        }
        let (raw_completion, parse) = last.expect("at least one attempt");
        Ok(StageOutcome { sample_id: post.id.clone(), stage, attempts, raw_completion, parse })
    }

    /// Processes a batch on the worker pool. Once a sample fails, samples not
    /// yet started are skipped.
    fn process_batch(&self, stage: Stage, items: &[(&Post, Option<&StageOutcome>)]) -> Vec<Processed> {
        let halted = AtomicBool::new(false);
        self.pool.map(items, |(post, prior)| {
            if halted.load(Ordering::SeqCst) {
                return Processed::Skipped;
            }
            match self.process(stage, post, *prior) {
                Ok(o) => Processed::Done(o),
                Err(e) => {
                    halted.store(true, Ordering::SeqCst);
                    Processed::Failed(e)
                }
            }
        })
    }

    fn run_list(
        &self,
        stage: Stage,
        items: &[(&Post, Option<&StageOutcome>)],
    ) -> Result<(Vec<AnnotatedSample>, Vec<StageOutcome>), AnnotateError> {
        let mut correct = Vec::new();
        let mut failed = Vec::new();
        for (item, result) in items.iter().zip(self.process_batch(stage, items)) {
            match result {
                Processed::Done(outcome) => match to_sample(item.0, &outcome) {
                    Some(sample) => correct.push(sample),
                    None => failed.push(outcome),
                },
                Processed::Failed(source) => {
                    return Err(AnnotateError::Deferred { stage, sample_id: item.0.id.clone(), source })
                }
                Processed::Skipped => unreachable!("skips only follow a failure"),
            }
        }
        Ok((correct, failed))
    }

    /// Stage 1 over `posts` in canonical order. Returns the samples whose
    /// chain matched the gold verdict and the outcomes of all others.
    pub fn run_stage1(&self, posts: &[Post]) -> Result<(Vec<AnnotatedSample>, Vec<StageOutcome>), AnnotateError> {
        let mut posts: Vec<&Post> = posts.iter().collect();
        posts.sort_by(|a, b| cmp_ids(&a.id, &b.id));
        let items: Vec<_> = posts.into_iter().map(|p| (p, None)).collect();
        self.run_list(Stage::Generate, &items)
    }

    /// Stage 2 over stage-1 failures; `posts` supplies their expressions.
    pub fn run_stage2(
        &self,
        posts: &[Post],
        failed: &[StageOutcome],
    ) -> Result<(Vec<AnnotatedSample>, Vec<StageOutcome>), AnnotateError> {
        self.run_reflection(Stage::SelfReflect, posts, failed)
    }

    /// Stage 3 over stage-2 failures. The second list holds dropped samples.
    pub fn run_stage3(
        &self,
        posts: &[Post],
        failed: &[StageOutcome],
    ) -> Result<(Vec<AnnotatedSample>, Vec<StageOutcome>), AnnotateError> {
        self.run_reflection(Stage::AnswerReflect, posts, failed)
    }

    fn run_reflection(
        &self,
        stage: Stage,
        posts: &[Post],
        failed: &[StageOutcome],
    ) -> Result<(Vec<AnnotatedSample>, Vec<StageOutcome>), AnnotateError> {
        let index = index_posts(posts)?;
        let items = failed
            .iter()
            .map(|o| {
                let post = index
                    .get(o.sample_id.as_str())
                    .ok_or_else(|| AnnotateError::Config(format!("outcome for unknown sample {}", o.sample_id)))?;
                Ok((*post, Some(o)))
            })
            .collect::<Result<Vec<_>, AnnotateError>>()?;
        self.run_list(stage, &items)
    }
}

fn to_sample(post: &Post, outcome: &StageOutcome) -> Option<AnnotatedSample> {
    match &outcome.parse {
        ParseOutcome::Parsed { chain, verdict_match: true } => {
            AnnotatedSample::new(post.clone(), chain.clone(), outcome.stage, outcome.attempts)
        }
        _ => None,
    }
}

fn index_posts(posts: &[Post]) -> Result<HashMap<&str, &Post>, AnnotateError> {
    let mut index = HashMap::with_capacity(posts.len());
    for p in posts {
        if index.insert(p.id.as_str(), p).is_some() {
            return Err(AnnotateError::DuplicateId(p.id.clone()));
        }
    }
    Ok(index)
}
