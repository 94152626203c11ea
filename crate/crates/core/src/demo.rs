//! Offline end-to-end walk through every stage: ingest, annotate, train the
//! quality gate, filter, export and evaluate. Driven by a recorded cassette,
//! it produces a report that is byte-stable across runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{AnnotatedSample, Split, Stage};
use crate::dataset::{
    export_alpaca, ingest, revalidate_export, Corpus, ExportError, ExportOptions, IngestError, IngestOptions, SplitSpec,
};
use crate::eval::{EvalConfig, EvalError, Evaluator};
use crate::gateway::{EndpointConfig, Gateway};
use crate::par::Execution;
use crate::pipeline::{load_samples, AnnotateConfig, AnnotateError, Annotator, RunManifest};
use crate::prompt::TemplateSet;
use crate::quality::{filter, labeled_examples, read_labels, train, QualityError, TrainConfig};

pub const DEMO_MODEL: &str = "demo-model";
pub const DEMO_TAU: f64 = 0.5;
pub const DEMO_EVAL_RUNS: usize = 3;

/// Endpoint settings the demo cassette was recorded under.
pub fn demo_endpoint() -> EndpointConfig {
    EndpointConfig::offline(DEMO_MODEL)
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Input files of the demo, all found in one directory.
#[derive(Debug, Clone)]
pub struct DemoInputs {
    pub posts: PathBuf,
    pub splits: PathBuf,
    pub labels: PathBuf,
    pub cassette: PathBuf,
}

impl DemoInputs {
    pub fn in_dir(dir: &Path) -> Self {
        DemoInputs {
            posts: dir.join("posts.csv"),
            splits: dir.join("splits.csv"),
            labels: dir.join("labels.jsonl"),
            cassette: dir.join("cassette.jsonl"),
        }
    }
}

#[derive(Debug)]
pub struct DemoReport {
    pub text: String,
    pub export: PathBuf,
    pub admitted: usize,
}

pub fn load_corpus(inputs: &DemoInputs) -> Result<Corpus, DemoError> {
    let opts = IngestOptions {
        name: Some("demo".into()),
        split: SplitSpec::Sidecar(inputs.splits.clone()),
        ..Default::default()
    };
    Ok(ingest(&inputs.posts, &opts)?.0)
}

/// Annotates the training split under `work/runs`.
pub fn annotate(
    corpus: &Corpus,
    gateway: Arc<Gateway>,
    work: &Path,
) -> Result<(RunManifest, Vec<AnnotatedSample>), DemoError> {
    let cfg = AnnotateConfig { runs_dir: work.join("runs"), ..Default::default() };
    let annotator = Annotator::new(cfg.clone(), gateway, TemplateSet::builtin().clone())?;
    let manifest = annotator.run(&corpus.split(Split::Train), None, None)?;
    let samples = load_samples(&cfg.runs_dir.join(&manifest.run_id))?;
    Ok((manifest, samples))
}

pub fn run_demo(inputs: &DemoInputs, gateway: Arc<Gateway>, work: &Path) -> Result<DemoReport, DemoError> {
    let mut out = String::new();
    let corpus = load_corpus(inputs)?;
    let sizes = corpus.split_sizes();
    writeln!(
        out,
        "corpus: {} posts (train {}, validation {}, test {}), fingerprint {}",
        corpus.len(),
        sizes.train,
        sizes.validation,
        sizes.test,
        &corpus.fingerprint()[..16]
    )
    .unwrap();

    let (manifest, samples) = annotate(&corpus, gateway.clone(), work)?;
    writeln!(out, "\nannotation: {}", manifest.run_id).unwrap();
    writeln!(
        out,
        "{:<15}{:>10}{:>9}{:>11}{:>14}{:>9}",
        "stage", "attempted", "correct", "incorrect", "parse_failed", "dropped"
    )
    .unwrap();
    for stage in Stage::ALL {
        let c = manifest.stages.get(stage);
        writeln!(
            out,
            "{:<15}{:>10}{:>9}{:>11}{:>14}{:>9}",
            stage.to_string(),
            c.attempted,
            c.verdict_correct,
            c.verdict_incorrect,
            c.parse_failed,
            c.dropped
        )
        .unwrap();
    }
    writeln!(out, "kept {}, dropped {}", manifest.total_correct, manifest.total_dropped).unwrap();

    let labels = read_labels(&inputs.labels)?;
    let examples = labeled_examples(&samples, &labels);
    let trained = train(&examples, &TrainConfig::default())?;
    writeln!(
        out,
        "\nquality: {} labelled, train {} (accuracy {:.4}), holdout {} (accuracy {})",
        examples.len(),
        trained.train_size,
        trained.train_accuracy,
        trained.holdout_size,
        trained.holdout_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
    )
    .unwrap();
    let filtered = filter(&trained.classifier, &samples, DEMO_TAU, Execution::Parallel)?;
    writeln!(
        out,
        "filter at tau {DEMO_TAU:.2}: admitted {}, rejected {}",
        filtered.admitted.len(),
        filtered.rejected.len()
    )
    .unwrap();

    let admitted: Vec<AnnotatedSample> = filtered.admitted.iter().map(|s| s.sample.clone()).collect();
    let export = work.join("export").join("train.jsonl");
    let summary = export_alpaca(&admitted, TemplateSet::builtin(), &ExportOptions::default(), &export)?;
    let checked = revalidate_export(&export, &admitted)?;
    let digest = hex::encode(Sha256::digest(std::fs::read(&export)?));
    writeln!(out, "\nexport: {} records, {checked} revalidated, sha256 {}", summary.records, &digest[..16]).unwrap();

    let cfg = EvalConfig { runs: DEMO_EVAL_RUNS, ..Default::default() };
    let report = Evaluator::new(&gateway, TemplateSet::builtin(), cfg)?.run(&corpus.split(Split::Test))?;
    writeln!(out, "\nevaluation on the test split ({} posts, {} runs):", report.samples, report.runs.len()).unwrap();
    out.push_str(&report.to_table());
    if !out.ends_with('\n') {
        out.push('\n');
    }
    Ok(DemoReport { text: out, export, admitted: admitted.len() })
}
