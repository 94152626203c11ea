//! Verdict extraction, classification metrics, multi-run evaluation,
//! chain-step ablations and human-rating aggregation.

mod human;
mod metrics;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{find_last_verdict_token, find_verdict_token, ChainConfig, Post, StressVerdict};
use crate::gateway::{Gateway, GatewayError};
use crate::par::WorkerPool;
use crate::prompt::{Baseline, TemplateSet};

pub use human::{
    aggregate_human_eval, read_sheets, Aspect, AspectMeans, HumanEvalError, HumanEvalRow, HumanEvalSheet,
    HumanEvalSummary, RaterSummary, RatingRecord,
};
pub use metrics::{compute_metrics, ConfusionMatrix, Metrics};

/// Share of unparseable responses above which a run is flagged degraded.
pub const DEGRADED_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{pred} predictions for {gold} gold labels")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("nothing to evaluate: the split is empty")]
    EmptySplit,
    #[error("no ablation configs given")]
    NoConfigs,
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("run {run}, sample {sample_id}: {source}")]
    Gateway {
        run: usize,
        sample_id: String,
        #[source]
        source: GatewayError,
    },
}

/// How the model is prompted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Yes/No classification.
    Direct,
    /// Free-form step-by-step reasoning.
    StandardCot,
    /// The cognition-chain prompt.
    #[serde(rename = "cogchain")]
    CogChain,
    /// Instruction followed by the post, as in the exported tuning records;
    /// for tuned-model endpoints.
    Instruction,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::StandardCot => "standard_cot",
            Strategy::CogChain => "cogchain",
            Strategy::Instruction => "instruction",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "direct" => Ok(Strategy::Direct),
            "standard_cot" | "cot" => Ok(Strategy::StandardCot),
            "cogchain" | "chain" => Ok(Strategy::CogChain),
            "instruction" | "tuned" => Ok(Strategy::Instruction),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
static STRESS_STATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)stress[ \t]+state[ \t]*(?:\*\*|__)?[ \t]*[:：\-–]").unwrap());

fn yes_no(word: &str) -> Option<StressVerdict> {
    match word.to_ascii_lowercase().as_str() {
        "yes" => Some(StressVerdict::Stressed),
        "no" => Some(StressVerdict::NonStressed),
        _ => None,
    }
}

/// Reads the model's verdict from a raw completion.
///
/// Direct: the first word when it is yes/no, else the only yes/no word
/// present, else a verdict token. Reasoning strategies: the first verdict
/// token after the last `Stress state:` marker that is followed by one,
/// else the last verdict token anywhere. `None` means unparseable.
pub fn extract_verdict(raw: &str, strategy: Strategy) -> Option<StressVerdict> {
    match strategy {
        Strategy::Direct => {
            let first = raw.split_whitespace().next().map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()));
            if let Some(v) = first.and_then(yes_no) {
                return Some(v);
            }
            let words: Vec<StressVerdict> = YES_NO.find_iter(raw).filter_map(|m| yes_no(m.as_str())).collect();
            match words.as_slice() {
                [] => find_last_verdict_token(raw),
                [first, rest @ ..] if rest.iter().all(|v| v == first) => Some(*first),
                _ => None,
            }
        }
        Strategy::StandardCot | Strategy::CogChain | Strategy::Instruction => {
            let markers: Vec<usize> = STRESS_STATE.find_iter(raw).map(|m| m.end()).collect();
            for (i, &start) in markers.iter().enumerate().rev() {
                let end = markers.get(i + 1).copied().unwrap_or(raw.len());
                if let Some(v) = find_verdict_token(&raw[start..end]) {
                    return Some(v);
                }
            }
            find_last_verdict_token(raw)
        }
    }
}

fn default_runs() -> usize {
    5
}
fn default_examples() -> usize {
    crate::prompt::DEFAULT_EXAMPLE_COUNT
}
fn default_workers() -> usize {
    4
}
fn default_strategy() -> Strategy {
    Strategy::CogChain
}

/// Evaluation settings (the `[eval]` table of a config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_examples")]
    pub examples: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Steps kept in the chain prompt; the full chain when absent.
    #[serde(default)]
    pub chain: Option<ChainConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            strategy: default_strategy(),
            runs: default_runs(),
            examples: default_examples(),
            workers: default_workers(),
            chain: None,
        }
    }
}

/// One pass over the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub unparseable: u64,
    pub degraded: bool,
}

/// Per-run results and their arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: Strategy,
    pub chain: String,
    pub samples: usize,
    pub runs: Vec<RunMetrics>,
    pub mean: Metrics,
    pub unparseable: u64,
    pub degraded: bool,
}

impl MetricsReport {
    fn from_runs(strategy: Strategy, chain: String, samples: usize, runs: Vec<RunMetrics>) -> Self {
        let n = runs.len() as f64;
        let mean_of = |f: fn(&Metrics) -> f64| runs.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let mut undefined: Vec<String> = runs.iter().flat_map(|r| r.metrics.undefined.clone()).collect();
        undefined.sort();
        undefined.dedup();
        let mean = Metrics {
            accuracy: mean_of(|m| m.accuracy),
            precision: mean_of(|m| m.precision),
            recall: mean_of(|m| m.recall),
            f1: mean_of(|m| m.f1),
            undefined,
        };
        MetricsReport {
            strategy,
            chain,
            samples,
            unparseable: runs.iter().map(|r| r.unparseable).sum(),
            degraded: runs.iter().any(|r| r.degraded),
            mean,
            runs,
        }
    }

    /// Aligned plain-text table, scores in percent.
    pub fn to_table(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.runs {
            rows.push(row_cells(&r.run.to_string(), &r.metrics, r.unparseable));
        }
        rows.push(row_cells("mean", &self.mean, self.unparseable));
        let mut out = format!(
            "strategy: {}  chain: {}  samples: {}  runs: {}{}\n",
            self.strategy,
            self.chain,
            self.samples,
            self.runs.len(),
            if self.degraded { "  [DEGRADED]" } else { "" }
        );
        out.push_str(&align(&["run", "Acc", "Prec", "Rec", "F1", "unparseable"], &rows));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,accuracy,precision,recall,f1,tp,fp,fn,tn,unparseable,degraded\n");
        for r in &self.runs {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.run,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                r.matrix.tp,
                r.matrix.fp,
                r.matrix.fn_,
                r.matrix.tn,
                r.unparseable,
                r.degraded
            ));
        }
        let m = &self.mean;
        out.push_str(&format!(
            "mean,{},{},{},{},,,,,{},{}\n",
            m.accuracy, m.precision, m.recall, m.f1, self.unparseable, self.degraded
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn row_cells(label: &str, m: &Metrics, unparseable: u64) -> Vec<String> {
    vec![label.to_string(), pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1), unparseable.to_string()]
}

fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&rule.iter().map(String::as_str).collect::<Vec<_>>()));
    for r in rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}

/// Renders prompts, queries the gateway and scores the answers.
pub struct Evaluator<'a> {
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    cfg: EvalConfig,
    pool: WorkerPool,
}

impl<'a> Evaluator<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateSet, cfg: EvalConfig) -> Result<Self, EvalError> {
        if cfg.runs == 0 {
            return Err(EvalError::Config("runs must be >= 1".into()));
        }
        let pool = WorkerPool::new(cfg.workers);
        Ok(Evaluator { gateway, templates, cfg, pool })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    /// The prompt sent for `post` under the configured strategy.
    pub fn prompt(&self, post: &Post, chain: &ChainConfig) -> String {
        let t = self.templates;
        let k = self.cfg.examples;
        match self.cfg.strategy {
            Strategy::Direct => {
                let ex = &t.cot_examples()[..k.min(t.cot_examples().len())];
                t.render_baseline(Baseline::Direct, ex, &post.text)
            }
            Strategy::StandardCot => {
                let ex = &t.cot_examples()[..k.min(t.cot_examples().len())];
                t.render_baseline(Baseline::StandardCot, ex, &post.text)
            }
            Strategy::CogChain => t.render_cogchain_ablated(t.default_examples(k), &post.text, chain),
            Strategy::Instruction => {
                format!("{}{}{}", t.instruction(), crate::dataset::INSTRUCTION_SEPARATOR, post.text)
            }
        }
    }

    /// Evaluates `posts` `runs` times; run `i > 0` salts its requests with
    /// `run=i` so each run has its own cassette entries.
    pub fn run(&self, posts: &[Post]) -> Result<MetricsReport, EvalError> {
        let chain = self.cfg.chain.clone().unwrap_or_else(ChainConfig::full);
        self.run_with_chain(posts, &chain)
    }

    fn run_with_chain(&self, posts: &[Post], chain: &ChainConfig) -> Result<MetricsReport, EvalError> {
        if posts.is_empty() {
            return Err(EvalError::EmptySplit);
        }
        let prompts: Vec<String> = posts.iter().map(|p| self.prompt(p, chain)).collect();
        let mut runs = Vec::with_capacity(self.cfg.runs);
        for run in 0..self.cfg.runs {
            let salt = if run == 0 { String::new() } else { format!("run={run}") };
            let answers = self.pool.map(&prompts, |prompt| self.gateway.complete_salted(prompt, &salt));
            let mut matrix = ConfusionMatrix::default();
            let mut unparseable = 0;
            for (post, answer) in posts.iter().zip(answers) {
                let completion =
                    answer.map_err(|source| EvalError::Gateway { run, sample_id: post.id.clone(), source })?;
                match extract_verdict(&completion.text, self.cfg.strategy) {
                    Some(v) => matrix.record(v, post.gold_label),
                    None => unparseable += 1,
                }
            }
            let degraded = unparseable as f64 / posts.len() as f64 > DEGRADED_THRESHOLD;
            runs.push(RunMetrics { run, metrics: matrix.metrics(), matrix, unparseable, degraded });
        }
        let code = if self.cfg.strategy == Strategy::CogChain { chain.code() } else { "-".into() };
        Ok(MetricsReport::from_runs(self.cfg.strategy, code, posts.len(), runs))
    }

    /// One chain-prompt evaluation per config, in the given order.
    pub fn ablation_suite(&self, posts: &[Post], configs: &[ChainConfig]) -> Result<AblationTable, EvalError> {
        if configs.is_empty() {
            return Err(EvalError::NoConfigs);
        }
        let chain_eval = Evaluator {
            gateway: self.gateway,
            templates: self.templates,
            cfg: EvalConfig { strategy: Strategy::CogChain, ..self.cfg.clone() },
            pool: WorkerPool::new(self.cfg.workers),
        };
        let rows = configs.iter().map(|c| chain_eval.run_with_chain(posts, c)).collect::<Result<Vec<_>, _>>()?;
        Ok(AblationTable { rows })
    }
}

/// Ablation grid: one report per chain configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<MetricsReport>,
}

impl AblationTable {
    pub fn row(&self, code: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.chain == code)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| row_cells(&r.chain, &r.mean, r.unparseable)).collect();
        align(&["steps", "Acc", "Prec", "Rec", "F1", "unparseable"], &rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("steps,accuracy,precision,recall,f1,unparseable,degraded\n");
        for r in &self.rows {
            let m = &r.mean;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.chain, m.accuracy, m.precision, m.recall, m.f1, r.unparseable, r.degraded
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StressVerdict::*;

    #[test]
    fn direct_mapping() {
        assert_eq!(extract_verdict("Yes", Strategy::Direct), Some(Stressed));
        assert_eq!(extract_verdict("no.", Strategy::Direct), Some(NonStressed));
        assert_eq!(extract_verdict("'Yes'", Strategy::Direct), Some(Stressed));
        assert_eq!(extract_verdict("The answer is no", Strategy::Direct), Some(NonStressed));
        assert_eq!(extract_verdict("Maybe yes, maybe no", Strategy::Direct), None);
        assert_eq!(extract_verdict("I cannot tell", Strategy::Direct), None);
    }

    #[test]
    fn stress_state_line_wins() {
        let raw = "The poster is not stressed about it. Stress state: stressed";
        assert_eq!(extract_verdict(raw, Strategy::CogChain), Some(Stressed));
        let chain = "1. Stimulus: x\n2. Evaluation: harmful\n3. Reaction: y\n4. Stress state: non-stressed";
        assert_eq!(extract_verdict(chain, Strategy::CogChain), Some(NonStressed));
        assert_eq!(extract_verdict("so overall stressed, not non-stressed", Strategy::StandardCot), Some(NonStressed));
        assert_eq!(extract_verdict("no idea", Strategy::StandardCot), None);
    }

    #[test]
    fn table_layout() {
        let m = ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 };
        let run = RunMetrics { run: 0, matrix: m, metrics: m.metrics(), unparseable: 0, degraded: false };
        let r = MetricsReport::from_runs(Strategy::CogChain, "SERA".into(), 10, vec![run]);
        let t = r.to_table();
        assert!(t.contains("80.00") && t.contains("75.00"), "{t}");
        assert_eq!(r.mean, r.runs[0].metrics);
    }
}
