use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::manifest::{ConfigSnapshot, Cursor, DeferredSample, RunManifest, RunStatus};
use super::{index_posts, to_sample, AnnotateError, Annotator, CommitObserver, Processed, StageOutcome};
use crate::chain::{cmp_ids, AnnotatedSample, Post, Stage};
use crate::dataset::corpus_fingerprint;

/// Files of one run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    dir: PathBuf,
}

impl RunLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunLayout { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    /// StageOutcome records of one stage, in commit order.
    pub fn outcomes(&self, stage: Stage) -> PathBuf {
        self.dir.join(format!("{}.jsonl", stage.as_str()))
    }

    /// Accepted samples, in commit order.
    pub fn samples(&self) -> PathBuf {
        self.dir.join("samples.jsonl")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotateError + '_ {
    move |source| AnnotateError::Io { path: path.display().to_string(), source }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, AnnotateError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| AnnotateError::CorruptRun(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), AnnotateError> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item).expect("records serialize"));
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(buf.as_bytes()).map_err(io_err(path))
}

/// Keeps the first `keep` lines, discarding records written after the last
/// manifest flush.
fn truncate_lines(path: &Path, keep: u64) -> Result<(), AnnotateError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let lines: Vec<&str> = text.lines().collect();
    if (lines.len() as u64) < keep {
        return Err(AnnotateError::CorruptRun(format!(
            "{} has {} records but the manifest committed {keep}",
            path.display(),
            lines.len()
        )));
    }
    if lines.len() as u64 > keep {
        let mut out: String = lines[..keep as usize].join("\n");
        if keep > 0 {
            out.push('\n');
        }
        std::fs::write(path, out).map_err(io_err(path))?;
    }
    Ok(())
}

/// Committed StageOutcome records of one stage.
pub fn load_outcomes(dir: &Path, stage: Stage) -> Result<Vec<StageOutcome>, AnnotateError> {
    read_jsonl(&RunLayout::new(dir).outcomes(stage))
}

/// Committed samples of a run.
pub fn load_samples(dir: &Path) -> Result<Vec<AnnotatedSample>, AnnotateError> {
    read_jsonl(&RunLayout::new(dir).samples())
}

/// Run id derived from the corpus and the output-relevant configuration.
pub fn derive_run_id(corpus_fingerprint: &str, snapshot: &ConfigSnapshot) -> String {
    let mut h = Sha256::new();
    h.update(corpus_fingerprint.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(snapshot).expect("snapshot serializes").as_bytes());
    format!("run-{}", &hex::encode(h.finalize())[..16])
}

struct RunState<'p> {
    manifest: RunManifest,
    layout: RunLayout,
    posts: Vec<&'p Post>,
    index: HashMap<&'p str, &'p Post>,
}

impl Annotator {
    /// Starts a new persistent run under `runs_dir`. The run id defaults to
    /// a hash of the corpus and configuration.
    pub fn run(
        &self,
        posts: &[Post],
        run_id: Option<&str>,
        observer: Option<&mut CommitObserver<'_>>,
    ) -> Result<RunManifest, AnnotateError> {
        let index = index_posts(posts)?;
        let fp = corpus_fingerprint(posts);
        let snapshot = self.snapshot();
        let run_id = run_id.map(str::to_string).unwrap_or_else(|| derive_run_id(&fp, &snapshot));
        let layout = RunLayout::new(self.cfg.runs_dir.join(&run_id));
        if layout.manifest().exists() {
            return Err(AnnotateError::RunExists { run_id });
        }
        std::fs::create_dir_all(layout.dir()).map_err(io_err(layout.dir()))?;
        for path in Stage::ALL.map(|s| layout.outcomes(s)).into_iter().chain([layout.samples()]) {
            std::fs::write(&path, "").map_err(io_err(&path))?;
        }
        let manifest = RunManifest::new(run_id, fp, posts.len() as u64, snapshot);
        manifest.store(&layout.manifest()).map_err(io_err(&layout.manifest()))?;
        self.drive(RunState { manifest, layout, posts: sorted(posts), index }, observer)
    }

    /// Continues a run from its cursor. Nothing at or before the cursor is
    /// requested again; a completed run returns immediately.
    pub fn resume(
        &self,
        posts: &[Post],
        run_id: &str,
        observer: Option<&mut CommitObserver<'_>>,
    ) -> Result<RunManifest, AnnotateError> {
        let layout = RunLayout::new(self.cfg.runs_dir.join(run_id));
        if !layout.manifest().exists() {
            return Err(AnnotateError::UnknownRun {
                run_id: run_id.to_string(),
                dir: self.cfg.runs_dir.display().to_string(),
            });
        }
        let mut manifest = RunManifest::load(&layout.manifest()).map_err(io_err(&layout.manifest()))?;
        let diff = manifest.config.diff(&self.snapshot());
        if !diff.is_empty() {
            return Err(AnnotateError::ConfigDrift { diff });
        }
        let index = index_posts(posts)?;
        let fp = corpus_fingerprint(posts);
        if fp != manifest.corpus_fingerprint {
            return Err(AnnotateError::CorpusDrift { expected: manifest.corpus_fingerprint, found: fp });
        }
        manifest.check_conservation().map_err(AnnotateError::CorruptRun)?;
        if manifest.status == RunStatus::Complete {
            return Ok(manifest);
        }
        for stage in Stage::ALL {
            truncate_lines(&layout.outcomes(stage), manifest.stages.get(stage).attempted)?;
        }
        truncate_lines(&layout.samples(), manifest.total_correct)?;
        manifest.status = RunStatus::Running;
        manifest.deferred = None;
        self.drive(RunState { manifest, layout, posts: sorted(posts), index }, observer)
    }

    fn stage_inputs<'p>(
        &self,
        state: &RunState<'p>,
        stage: Stage,
    ) -> Result<Vec<(&'p Post, Option<StageOutcome>)>, AnnotateError> {
        let previous = match stage {
            Stage::Generate => return Ok(state.posts.iter().map(|p| (*p, None)).collect()),
            Stage::SelfReflect => Stage::Generate,
            Stage::AnswerReflect => Stage::SelfReflect,
        };
        let outcomes: Vec<StageOutcome> = read_jsonl(&state.layout.outcomes(previous))?;
        let forwarded = state.manifest.stages.get(previous).forwarded();
        let failed: Vec<StageOutcome> = outcomes.into_iter().filter(|o| !o.is_correct()).collect();
        if failed.len() as u64 != forwarded {
            return Err(AnnotateError::CorruptRun(format!(
                "{previous} forwarded {forwarded} samples but {} failed outcomes are stored",
                failed.len()
            )));
        }
        failed
            .into_iter()
            .map(|o| {
                let post = state
                    .index
                    .get(o.sample_id.as_str())
                    .ok_or_else(|| AnnotateError::CorruptRun(format!("outcome for unknown sample {}", o.sample_id)))?;
                Ok((*post, Some(o)))
            })
            .collect()
    }

    fn drive(
        &self,
        mut state: RunState<'_>,
        mut observer: Option<&mut CommitObserver<'_>>,
    ) -> Result<RunManifest, AnnotateError> {
        for stage in Stage::ALL {
            let inputs = self.stage_inputs(&state, stage)?;
            let done = state.manifest.stages.get(stage).attempted as usize;
            if let Some(cursor) = &state.manifest.cursor {
                if cursor.stage == stage && (done == 0 || inputs[done - 1].0.id != cursor.sample_id) {
                    return Err(AnnotateError::CorruptRun(format!(
                        "cursor {} does not match committed {stage} records",
                        cursor.sample_id
                    )));
                }
            }
            for batch in inputs[done.min(inputs.len())..].chunks(self.cfg.batch_size) {
                let items: Vec<(&Post, Option<&StageOutcome>)> = batch.iter().map(|(p, o)| (*p, o.as_ref())).collect();
                let results = self.process_batch(stage, &items);
                let failure = self.commit(&mut state, stage, &items, results)?;
                if let Some((sample_id, source)) = failure {
                    state.manifest.status = RunStatus::Deferred;
                    state.manifest.deferred =
                        Some(DeferredSample { stage, sample_id: sample_id.clone(), error: source.to_string() });
                    self.flush(&state)?;
                    let _ = notify(&mut observer, &state.manifest);
                    return Err(AnnotateError::Deferred { stage, sample_id, source });
                }
                self.flush(&state)?;
                if notify(&mut observer, &state.manifest).is_break() {
                    return Err(AnnotateError::Interrupted);
                }
            }
        }
        state.manifest.status = RunStatus::Complete;
        self.flush(&state)?;
        let _ = notify(&mut observer, &state.manifest);
        Ok(state.manifest)
    }

    /// Appends the committed prefix of a batch. Returns the failing sample
    /// when the batch did not complete.
    fn commit(
        &self,
        state: &mut RunState<'_>,
        stage: Stage,
        items: &[(&Post, Option<&StageOutcome>)],
        results: Vec<Processed>,
    ) -> Result<Option<(String, crate::gateway::GatewayError)>, AnnotateError> {
        let mut outcomes = Vec::new();
        let mut samples = Vec::new();
        let mut failure = None;
        let mut stopped = false;
        for ((post, _), result) in items.iter().zip(results) {
            match result {
                Processed::Done(outcome) if !stopped => {
                    let counters = state.manifest.stages.get_mut(stage);
                    counters.attempted += 1;
                    match outcome.verdict_match() {
                        Some(true) => counters.verdict_correct += 1,
                        Some(false) => counters.verdict_incorrect += 1,
                        None => counters.parse_failed += 1,
                    }
                    match to_sample(post, &outcome) {
                        Some(sample) => samples.push(sample),
                        None if stage == Stage::AnswerReflect => counters.dropped += 1,
                        None => {}
                    }
                    state.manifest.cursor = Some(Cursor { stage, sample_id: post.id.clone() });
                    outcomes.push(outcome);
                }
                Processed::Done(_) => {}
                Processed::Failed(e) => {
                    stopped = true;
                    if failure.is_none() {
                        failure = Some((post.id.clone(), e));
                    }
                }
                Processed::Skipped => stopped = true,
            }
        }
        append_jsonl(&state.layout.outcomes(stage), &outcomes)?;
        append_jsonl(&state.layout.samples(), &samples)?;
        state.manifest.refresh_totals();
        Ok(failure)
    }

    fn flush(&self, state: &RunState<'_>) -> Result<(), AnnotateError> {
        debug_assert_eq!(state.manifest.check_conservation(), Ok(()));
        let path = state.layout.manifest();
        state.manifest.store(&path).map_err(io_err(&path))
    }
}

fn notify(observer: &mut Option<&mut CommitObserver<'_>>, manifest: &RunManifest) -> ControlFlow<()> {
    match observer {
        Some(f) => f(manifest),
        None => ControlFlow::Continue(()),
    }
}

fn sorted(posts: &[Post]) -> Vec<&Post> {
    let mut v: Vec<&Post> = posts.iter().collect();
    v.sort_by(|a, b| cmp_ids(&a.id, &b.id));
    v
}
