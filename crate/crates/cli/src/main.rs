//! `cogchain`: ingest, annotate, filter, export and evaluate from the shell.

mod config;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cogchain::chain::{AnnotatedSample, ChainConfig, Split};
use cogchain::dataset::{
    export_alpaca, ingest, revalidate_export, stats, stats_for_samples, Corpus, CorpusStats, ExportOptions,
    IngestOptions, SplitPreset, SplitSpec, TokenStats,
};
use cogchain::demo::{demo_endpoint, run_demo, DemoInputs};
use cogchain::eval::{aggregate_human_eval, read_sheets, EvalConfig, Evaluator, Strategy};
use cogchain::gateway::{Cassette, EndpointConfig, Gateway};
use cogchain::par::Execution;
use cogchain::pipeline::{load_samples, Annotator, RunManifest, RunStatus};
use cogchain::prompt::TemplateSet;
use cogchain::quality::{
    filter, labeled_examples, read_labels, train, HttpScorer, QualityClassifier, ScoredSample, Scorer,
};
use cogchain_review::ReviewService;
use config::Config;

#[derive(Debug, Parser)]
#[command(name = "cogchain", version, about = "Cognition-chain dataset toolkit")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Run data-parallel steps on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a CSV/JSONL corpus, normalize labels, assign splits and save it.
    Ingest(IngestArgs),
    /// Post counts and average token lengths of a corpus or annotated set.
    Stats(StatsArgs),
    /// Run the three-stage annotator over a corpus split.
    Annotate(AnnotateArgs),
    /// Train the quality classifier or filter samples with it.
    #[command(subcommand)]
    Quality(QualityCommand),
    /// Write admitted samples as instruction-tuning JSONL plus a mask sidecar.
    Export(ExportArgs),
    /// Evaluate stress detection on a corpus split.
    Eval(EvalArgs),
    /// Evaluate each chain-step configuration.
    Ablate(AblateArgs),
    /// Aggregate explanation ratings.
    #[command(name = "human-eval", subcommand)]
    HumanEval(HumanEvalCommand),
    /// Expert review service.
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Offline walk through every stage using a recorded cassette.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    input: PathBuf,
    /// Where to write the normalized corpus (JSONL of posts).
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    name: Option<String>,
    /// `id,split` CSV or JSONL naming every post's split.
    #[arg(long, conflicts_with_all = ["preset", "ratios", "all"])]
    split_file: Option<PathBuf>,
    /// Named split ratios: dreaddit or wbsd.
    #[arg(long, conflicts_with_all = ["ratios", "all"])]
    preset: Option<SplitPreset>,
    /// Train and validation fractions, e.g. `0.8,0.1`.
    #[arg(long, value_delimiter = ',', num_args = 2, conflicts_with = "all")]
    ratios: Option<Vec<f64>>,
    /// Put every post in one split.
    #[arg(long)]
    all: Option<Split>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "id")]
    id_field: String,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long, default_value = "label")]
    label_field: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Corpus file from `ingest`, or with `--samples` a run directory or
    /// samples JSONL.
    path: PathBuf,
    #[arg(long)]
    samples: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

/// Endpoint access shared by annotate, eval and ablate.
#[derive(Debug, Args)]
struct GatewayArgs {
    /// Answer every request from this cassette; no network access.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Call the endpoint and append every exchange to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Continue an interrupted run.
    #[arg(long)]
    resume: Option<String>,
    #[arg(long, default_value = "train")]
    split: Split,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Subcommand)]
enum QualityCommand {
    /// Fit the classifier on expert labels.
    Train(QualityTrainArgs),
    /// Score samples and split them at the threshold.
    Filter(QualityFilterArgs),
}

#[derive(Debug, Args)]
struct QualityTrainArgs {
    /// Run directory or samples JSONL.
    #[arg(long)]
    samples: PathBuf,
    /// Quality label JSONL.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QualityFilterArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Classifier artifact from `quality train`.
    #[arg(long, required_unless_present = "scorer_url", conflicts_with = "scorer_url")]
    model: Option<PathBuf>,
    /// External scorer answering POST /score.
    #[arg(long)]
    scorer_url: Option<String>,
    /// Threshold; defaults to the artifact's.
    #[arg(long)]
    tau: Option<f64>,
    /// Receives admitted.jsonl and rejected.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Run directory, samples JSONL or `admitted.jsonl` from `quality filter`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Append this many few-shot examples to the instruction.
    #[arg(long)]
    examples: Option<usize>,
    /// Template directory; the built-in templates when absent.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    runs: Option<usize>,
    /// Steps kept in the chain prompt, e.g. `SEA`.
    #[arg(long)]
    chain: Option<ChainConfig>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    runs: Option<usize>,
    /// Step configuration to evaluate (repeatable); the five standard rows
    /// when absent.
    #[arg(long = "row")]
    rows: Vec<ChainConfig>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Subcommand)]
enum HumanEvalCommand {
    /// Per-aspect means over raters from CSV or JSONL rating sheets.
    Aggregate(HumanEvalArgs),
}

#[derive(Debug, Args)]
struct HumanEvalArgs {
    #[arg(required = true)]
    sheets: Vec<PathBuf>,
    /// Add one row per rater.
    #[arg(long)]
    by_rater: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum ReviewCommand {
    /// Serve the review API (and review-ui assets when configured).
    Serve(ReviewServeArgs),
}

#[derive(Debug, Args)]
struct ReviewServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory or samples JSONL to draw the queue from.
    #[arg(long)]
    samples: PathBuf,
    /// Overrides `[review] bind`.
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Directory holding posts.csv, splits.csv, labels.jsonl and cassette.jsonl.
    #[arg(long)]
    dir: PathBuf,
    /// Scratch directory for runs and exports; must not hold an earlier run.
    #[arg(long)]
    work: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Stats(a) => cmd_stats(a, exec),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Quality(QualityCommand::Train(a)) => cmd_quality_train(a, exec),
        Command::Quality(QualityCommand::Filter(a)) => cmd_quality_filter(a, exec),
        Command::Export(a) => cmd_export(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::HumanEval(HumanEvalCommand::Aggregate(a)) => cmd_human_eval(a),
        Command::Review(ReviewCommand::Serve(a)) => cmd_review(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn templates(dir: Option<&Path>) -> anyhow::Result<TemplateSet> {
    match dir {
        Some(d) => TemplateSet::load_dir(d).with_context(|| format!("loading templates from {}", d.display())),
        None => Ok(TemplateSet::builtin().clone()),
    }
}

/// Samples from a run directory, or JSONL of samples or scored samples.
fn read_samples(path: &Path) -> anyhow::Result<Vec<AnnotatedSample>> {
    if path.is_dir() {
        return load_samples(path).with_context(|| format!("loading samples from {}", path.display()));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let value: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let sample = match value.get("sample") {
            Some(_) => serde_json::from_value::<ScoredSample>(value).map(|s| s.sample),
            None => serde_json::from_value::<AnnotatedSample>(value),
        };
        out.push(sample.with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn build_gateway(endpoint: EndpointConfig, args: &GatewayArgs) -> anyhow::Result<Arc<Gateway>> {
    let gateway = match (&args.replay, &args.record) {
        (Some(path), _) => {
            let cassette = Cassette::load(path).with_context(|| format!("loading cassette {}", path.display()))?;
            Gateway::replay(endpoint, Arc::new(cassette))?
        }
        (None, Some(path)) => {
            let cassette = Cassette::open(path).with_context(|| format!("opening cassette {}", path.display()))?;
            Gateway::http_recording(endpoint, Arc::new(cassette))?
        }
        (None, None) => Gateway::http(endpoint)?,
    };
    Ok(Arc::new(gateway))
}

/// Rewrites a recorded cassette in fingerprint order so reruns diff cleanly.
fn finish_recording(gateway: &Gateway, args: &GatewayArgs) -> anyhow::Result<()> {
    if let (Some(path), Some(cassette)) = (&args.record, gateway.cassette()) {
        cassette.write_sorted(path).with_context(|| format!("writing cassette {}", path.display()))?;
    }
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_ingest(a: IngestArgs) -> anyhow::Result<()> {
    let split = if let Some(file) = a.split_file {
        SplitSpec::Sidecar(file)
    } else if let Some(preset) = a.preset {
        SplitSpec::preset(preset, a.seed)
    } else if let Some(r) = a.ratios {
        SplitSpec::Ratios { train: r[0], validation: r[1], seed: a.seed }
    } else if let Some(s) = a.all {
        SplitSpec::All(s)
    } else {
        SplitSpec::Ratios { train: 0.8, validation: 0.1, seed: a.seed }
    };
    let opts = IngestOptions {
        name: a.name,
        id_field: a.id_field,
        text_field: a.text_field,
        label_field: a.label_field,
        split,
    };
    let (corpus, report) = ingest(&a.input, &opts).with_context(|| format!("ingesting {}", a.input.display()))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    corpus.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let sizes = corpus.split_sizes();
    println!(
        "{}: {} rows, {} accepted, {} empty rejected; train {}, validation {}, test {}",
        corpus.name, report.rows, report.accepted, report.rejected_empty, sizes.train, sizes.validation, sizes.test
    );
    println!("fingerprint {}", corpus.fingerprint());
    Ok(())
}

fn token_row(name: &str, t: &TokenStats) -> String {
    format!("{name:<14}{:>8}{:>12}{:>10.2}\n", t.count, t.total_tokens, t.avg_tokens)
}

fn corpus_table(s: &CorpusStats) -> String {
    format!(
        "posts {} (stressed {}, non-stressed {}); train {}, validation {}, test {}\n{:<14}{:>8}{:>12}{:>10}\n{}",
        s.posts.count,
        s.stressed,
        s.non_stressed,
        s.train,
        s.validation,
        s.test,
        "field",
        "count",
        "tokens",
        "avg",
        token_row("post", &s.posts)
    )
}

fn cmd_stats(a: StatsArgs, exec: Execution) -> anyhow::Result<()> {
    let text = if a.samples {
        let s = stats_for_samples(&read_samples(&a.path)?, exec);
        match a.format {
            Format::Json => serde_json::to_string_pretty(&s)? + "\n",
            Format::Csv => {
                let mut out = String::from("field,count,tokens,avg\n");
                for (name, t) in [
                    ("post", &s.corpus.posts),
                    ("stimulus", &s.stimulus),
                    ("evaluation", &s.evaluation),
                    ("reaction", &s.reaction),
                    ("stress_state", &s.stress_state),
                ] {
                    out.push_str(&format!("{name},{},{},{:.4}\n", t.count, t.total_tokens, t.avg_tokens));
                }
                out
            }
            Format::Table => {
                let mut out = corpus_table(&s.corpus);
                out.push_str(&token_row("stimulus", &s.stimulus));
                out.push_str(&token_row("evaluation", &s.evaluation));
                out.push_str(&token_row("reaction", &s.reaction));
                out.push_str(&token_row("stress_state", &s.stress_state));
                out
            }
        }
    } else {
        let s = stats(&load_corpus(&a.path)?.posts, exec);
        match a.format {
            Format::Json => serde_json::to_string_pretty(&s)? + "\n",
            Format::Csv => format!(
                "posts,stressed,non_stressed,train,validation,test,tokens,avg\n{},{},{},{},{},{},{},{:.4}\n",
                s.posts.count,
                s.stressed,
                s.non_stressed,
                s.train,
                s.validation,
                s.test,
                s.posts.total_tokens,
                s.posts.avg_tokens
            ),
            Format::Table => corpus_table(&s),
        }
    };
    print!("{text}");
    Ok(())
}

fn manifest_summary(m: &RunManifest, dir: &Path) -> String {
    let mut out = format!("run {} ({:?}) in {}\n", m.run_id, m.status, dir.display());
    out.push_str(&format!(
        "{:<15}{:>10}{:>9}{:>11}{:>14}{:>9}\n",
        "stage", "attempted", "correct", "incorrect", "parse_failed", "dropped"
    ));
    for stage in cogchain::chain::Stage::ALL {
        let c = m.stages.get(stage);
        out.push_str(&format!(
            "{:<15}{:>10}{:>9}{:>11}{:>14}{:>9}\n",
            stage.to_string(),
            c.attempted,
            c.verdict_correct,
            c.verdict_incorrect,
            c.parse_failed,
            c.dropped
        ));
    }
    out.push_str(&format!("kept {}, dropped {}, pending {}\n", m.total_correct, m.total_dropped, m.pending));
    if let Some(d) = &m.deferred {
        out.push_str(&format!("deferred at {} sample {}: {}\n", d.stage, d.sample_id, d.error));
    }
    out
}

fn cmd_annotate(a: AnnotateArgs) -> anyhow::Result<()> {
    let cfg = Config::load(Some(&a.config))?;
    let posts = load_corpus(&a.corpus)?.split(a.split);
    if posts.is_empty() {
        bail!("the {} split of {} is empty", a.split, a.corpus.display());
    }
    let gateway = build_gateway(cfg.endpoint()?, &a.gateway)?;
    let tpl = templates(cfg.annotate.templates.as_deref())?;
    let annotator = Annotator::new(cfg.annotate.clone(), gateway.clone(), tpl)?;
    let result = match &a.resume {
        Some(id) => annotator.resume(&posts, id, None),
        None => annotator.run(&posts, None, None),
    };
    finish_recording(&gateway, &a.gateway)?;
    let manifest = result?;
    print!("{}", manifest_summary(&manifest, &cfg.annotate.runs_dir.join(&manifest.run_id)));
    if manifest.status == RunStatus::Deferred {
        bail!("run {} deferred; fix the endpoint and rerun with --resume {}", manifest.run_id, manifest.run_id);
    }
    Ok(())
}

fn cmd_quality_train(a: QualityTrainArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = Config::load(a.config.as_deref())?;
    let samples = read_samples(&a.samples)?;
    let labels = read_labels(&a.labels)?;
    let examples = labeled_examples(&samples, &labels);
    if examples.is_empty() {
        bail!("no sample in {} has a label in {}", a.samples.display(), a.labels.display());
    }
    let report = train(&examples, &cogchain::quality::TrainConfig { execution: exec, ..cfg.quality })?;
    report.classifier.save(&a.out)?;
    println!(
        "trained on {} of {} labelled samples (accuracy {:.4}); holdout {} (accuracy {}); tau {}",
        report.train_size,
        examples.len(),
        report.train_accuracy,
        report.holdout_size,
        report.holdout_accuracy.map_or("-".into(), |x| format!("{x:.4}")),
        report.classifier.tau
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn cmd_quality_filter(a: QualityFilterArgs, exec: Execution) -> anyhow::Result<()> {
    let samples = read_samples(&a.samples)?;
    let (scorer, default_tau): (Box<dyn Scorer>, f64) = match (&a.model, &a.scorer_url) {
        (Some(path), _) => {
            let clf = QualityClassifier::load(path)?;
            let tau = clf.tau;
            (Box::new(clf), tau)
        }
        (None, Some(url)) => (Box::new(HttpScorer::new(url, std::time::Duration::from_secs(30))?), 0.5),
        (None, None) => bail!("pass --model or --scorer-url"),
    };
    let result = filter(scorer.as_ref(), &samples, a.tau.unwrap_or(default_tau), exec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_jsonl(&a.out_dir.join("admitted.jsonl"), &result.admitted)?;
    write_jsonl(&a.out_dir.join("rejected.jsonl"), &result.rejected)?;
    println!(
        "tau {}: admitted {}, rejected {} -> {}",
        result.tau,
        result.admitted.len(),
        result.rejected.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> anyhow::Result<()> {
    let samples = read_samples(&a.samples)?;
    let tpl = templates(a.templates.as_deref())?;
    let opts = ExportOptions { include_examples: a.examples.is_some(), examples: a.examples.unwrap_or(0) };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let summary = export_alpaca(&samples, &tpl, &opts, &a.out)?;
    let checked = revalidate_export(&a.out, &samples)?;
    println!(
        "exported {} records ({checked} revalidated) to {}; mask spec {}",
        summary.records,
        summary.path.display(),
        summary.sidecar.display()
    );
    Ok(())
}

struct EvalSetup {
    posts: Vec<cogchain::chain::Post>,
    gateway: Arc<Gateway>,
    templates: TemplateSet,
    eval: EvalConfig,
}

fn eval_setup(corpus: &Path, config: &Path, split: Split, gateway: &GatewayArgs) -> anyhow::Result<EvalSetup> {
    let cfg = Config::load(Some(config))?;
    let posts = load_corpus(corpus)?.split(split);
    if posts.is_empty() {
        bail!("the {split} split of {} is empty", corpus.display());
    }
    Ok(EvalSetup {
        posts,
        gateway: build_gateway(cfg.endpoint()?, gateway)?,
        templates: templates(cfg.annotate.templates.as_deref())?,
        eval: cfg.eval,
    })
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let mut s = eval_setup(&a.corpus, &a.config, a.split, &a.gateway)?;
    if let Some(st) = a.strategy {
        s.eval.strategy = st;
    }
    if let Some(r) = a.runs {
        s.eval.runs = r;
    }
    if a.chain.is_some() {
        s.eval.chain = a.chain;
    }
    let result = Evaluator::new(&s.gateway, &s.templates, s.eval)?.run(&s.posts);
    finish_recording(&s.gateway, &a.gateway)?;
    let report = result?;
    let text = match a.format {
        Format::Table => report.to_table(),
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    write_or_print(a.out.as_deref(), &text)?;
    if report.degraded {
        tracing::warn!(unparseable = report.unparseable, "at least one run is degraded");
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> anyhow::Result<()> {
    let mut s = eval_setup(&a.corpus, &a.config, a.split, &a.gateway)?;
    if let Some(r) = a.runs {
        s.eval.runs = r;
    }
    let rows = if a.rows.is_empty() { ChainConfig::ablation_rows() } else { a.rows };
    let result = Evaluator::new(&s.gateway, &s.templates, s.eval)?.ablation_suite(&s.posts, &rows);
    finish_recording(&s.gateway, &a.gateway)?;
    let table = result?;
    let text = match a.format {
        Format::Table => table.to_table(),
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    write_or_print(a.out.as_deref(), &text)
}

fn cmd_human_eval(a: HumanEvalArgs) -> anyhow::Result<()> {
    let mut sheets = Vec::new();
    for path in &a.sheets {
        sheets.extend(read_sheets(path)?);
    }
    let summary = aggregate_human_eval(&sheets)?;
    let text = match (a.format, a.by_rater) {
        (Format::Json, _) => serde_json::to_string_pretty(&summary)? + "\n",
        (_, true) => summary.to_csv_by_rater(),
        (_, false) => summary.to_csv(),
    };
    print!("{text}");
    Ok(())
}

fn cmd_review(a: ReviewServeArgs) -> anyhow::Result<()> {
    let cfg = Config::load(Some(&a.config))?;
    let mut review = cfg.review.context("config has no [review] table")?;
    if let Some(bind) = a.bind {
        review.bind = bind;
    }
    let samples = read_samples(&a.samples)?;
    let service = Arc::new(ReviewService::new(review, samples)?);
    println!("review queue: {} items; listening on {}", service.queue().len(), service.config().bind);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(cogchain_review::serve(service))?;
    Ok(())
}

fn cmd_demo(a: DemoArgs) -> anyhow::Result<()> {
    let inputs = DemoInputs::in_dir(&a.dir);
    let cassette =
        Cassette::load(&inputs.cassette).with_context(|| format!("loading cassette {}", inputs.cassette.display()))?;
    let gateway = Arc::new(Gateway::replay(demo_endpoint(), Arc::new(cassette))?);
    let report = run_demo(&inputs, gateway, &a.work)?;
    print!("{}", report.text);
    Ok(())
}
