//! Posts, cognition chains and their canonical text form.
//!
//! A cognition chain is the four-step explanation
//! `Stimulus -> Evaluation -> Reaction -> Stress state`. The canonical text
//! form is four numbered lines:
//!
//! ```text
//! 1. Stimulus: exam tomorrow
//! 2. Evaluation: harmful, threatens grades
//! 3. Reaction: panic, can't sleep
//! 4. Stress state: stressed
//! ```
//!
//! [`parse_chain`] reads that form (and the usual LLM deviations from it),
//! [`serialize_chain`] writes it, and [`ablate_chain`] writes a subset of the
//! steps for ablation prompts.

mod lint;
mod parse;

pub(crate) use parse::find_last_verdict_token;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lint::{lint_chain, LintWarning};
pub use parse::{find_verdict_token, parse_chain, ParseError};

/// Binary stress label. Positive class is [`StressVerdict::Stressed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StressVerdict {
    Stressed,
    NonStressed,
}

impl StressVerdict {
    pub const ALL: [StressVerdict; 2] = [StressVerdict::Stressed, StressVerdict::NonStressed];

    /// Canonical serialized form: `stressed` or `non-stressed`.
    pub fn as_str(self) -> &'static str {
        match self {
            StressVerdict::Stressed => "stressed",
            StressVerdict::NonStressed => "non-stressed",
        }
    }

    pub fn is_stressed(self) -> bool {
        self == StressVerdict::Stressed
    }
}

impl fmt::Display for StressVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StressVerdict {
    type Err = ParseError;

    /// Accepts the verdict spellings an LLM produces for the stress-state step:
    /// `stressed`, `non-stressed`, `nonstressed`, `non stressed`, `not stressed`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
        match norm.as_str() {
            "stressed" => Ok(StressVerdict::Stressed),
            "non-stressed" | "nonstressed" | "non stressed" | "not stressed" => Ok(StressVerdict::NonStressed),
            _ => Err(ParseError::UnrecognizedVerdict(s.to_string())),
        }
    }
}

/// Outcome of appraising a stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppraisalCategory {
    Beneficial,
    Harmful,
    Irrelevant,
}

impl AppraisalCategory {
    pub const ALL: [AppraisalCategory; 3] =
        [AppraisalCategory::Beneficial, AppraisalCategory::Harmful, AppraisalCategory::Irrelevant];

    pub fn as_str(self) -> &'static str {
        match self {
            AppraisalCategory::Beneficial => "beneficial",
            AppraisalCategory::Harmful => "harmful",
            AppraisalCategory::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for AppraisalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dataset split a post belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One social-media expression with its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub gold_label: StressVerdict,
    pub source: String,
    pub split: Split,
}

impl Post {
    /// Returns `None` when `text` is blank.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_label: StressVerdict,
        source: impl Into<String>,
        split: Split,
    ) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        Some(Post { id: id.into(), text, gold_label, source: source.into(), split })
    }
}

/// A step of the cognition chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    Stimulus,
    Evaluation,
    Reaction,
    StressState,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::Stimulus, Step::Evaluation, Step::Reaction, Step::StressState];

    /// Canonical header as it appears in serialized chains.
    pub fn header(self) -> &'static str {
        match self {
            Step::Stimulus => "Stimulus",
            Step::Evaluation => "Evaluation",
            Step::Reaction => "Reaction",
            Step::StressState => "Stress state",
        }
    }

    /// Single-letter code used in ablation tables.
    pub fn code(self) -> char {
        match self {
            Step::Stimulus => 'S',
            Step::Evaluation => 'E',
            Step::Reaction => 'R',
            Step::StressState => 'A',
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

/// Four-step explanation of a stress verdict.
///
/// Text fields are stored whitespace-normalized (runs of whitespace collapse
/// to one space) so the canonical text form is always one line per step.
/// The appraisal is derived from the evaluation text and cannot be set
/// independently.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CognitionChain {
    stimulus: Option<String>,
    evaluation: String,
    appraisal: Option<AppraisalCategory>,
    reaction: String,
    verdict: StressVerdict,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True for the "no stimulus" marker, tolerating quotes and a trailing period.
pub(crate) fn is_na_marker(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').trim_matches(|c| c == '\'' || c == '"' || c == '`');
    t.eq_ignore_ascii_case("n/a") || t.eq_ignore_ascii_case("na")
}

impl CognitionChain {
    pub fn new(
        stimulus: Option<&str>,
        evaluation: &str,
        reaction: &str,
        verdict: StressVerdict,
    ) -> Result<Self, ParseError> {
        let stimulus = stimulus.map(normalize_ws).filter(|s| !s.is_empty() && !is_na_marker(s));
        let evaluation = normalize_ws(evaluation);
        if evaluation.is_empty() {
            return Err(ParseError::EmptyStep(Step::Evaluation));
        }
        let reaction = normalize_ws(reaction);
        if reaction.is_empty() {
            return Err(ParseError::EmptyStep(Step::Reaction));
        }
        let appraisal = parse::find_appraisal(&evaluation);
        Ok(CognitionChain { stimulus, evaluation, appraisal, reaction, verdict })
    }

    pub fn stimulus(&self) -> Option<&str> {
        self.stimulus.as_deref()
    }

    pub fn evaluation(&self) -> &str {
        &self.evaluation
    }

    pub fn appraisal(&self) -> Option<AppraisalCategory> {
        self.appraisal
    }

    pub fn reaction(&self) -> &str {
        &self.reaction
    }

    pub fn verdict(&self) -> StressVerdict {
        self.verdict
    }

    /// Text of a step as it appears after its header in the canonical form.
    pub fn step_text(&self, step: Step) -> &str {
        match step {
            Step::Stimulus => self.stimulus.as_deref().unwrap_or("N/A"),
            Step::Evaluation => &self.evaluation,
            Step::Reaction => &self.reaction,
            Step::StressState => self.verdict.as_str(),
        }
    }
}

/// Persisted form: the canonical text plus the parsed fields.
#[derive(Serialize, Deserialize)]
struct ChainRecord {
    text: String,
    stimulus: Option<String>,
    evaluation: String,
    appraisal: Option<AppraisalCategory>,
    reaction: String,
    verdict: StressVerdict,
}

impl Serialize for CognitionChain {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ChainRecord {
            text: serialize_chain(self),
            stimulus: self.stimulus.clone(),
            evaluation: self.evaluation.clone(),
            appraisal: self.appraisal,
            reaction: self.reaction.clone(),
            verdict: self.verdict,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CognitionChain {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let rec = ChainRecord::deserialize(deserializer)?;
        let chain = CognitionChain::new(rec.stimulus.as_deref(), &rec.evaluation, &rec.reaction, rec.verdict)
            .map_err(D::Error::custom)?;
        if chain.appraisal != rec.appraisal {
            return Err(D::Error::custom("appraisal does not match evaluation text"));
        }
        if parse_chain(&rec.text).map_err(D::Error::custom)? != chain {
            return Err(D::Error::custom("chain text does not match parsed fields"));
        }
        Ok(chain)
    }
}

/// Which reasoning steps a prompt or serialized chain includes.
///
/// The stress-state step is always present; the others are kept in
/// canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ChainConfig {
    steps: Vec<Step>,
}

impl ChainConfig {
    pub fn full() -> Self {
        ChainConfig { steps: vec![Step::Stimulus, Step::Evaluation, Step::Reaction] }
    }

    /// Stress state only.
    pub fn answer_only() -> Self {
        ChainConfig { steps: Vec::new() }
    }

    /// `StressState` in the input is accepted and ignored.
    pub fn from_steps(steps: impl IntoIterator<Item = Step>) -> Self {
        let mut steps: Vec<Step> = steps.into_iter().filter(|s| *s != Step::StressState).collect();
        steps.sort();
        steps.dedup();
        ChainConfig { steps }
    }

    /// The five configurations of the step ablation table, full chain first.
    pub fn ablation_rows() -> Vec<ChainConfig> {
        use Step::*;
        vec![
            ChainConfig::full(),
            ChainConfig::from_steps([Stimulus, Evaluation]),
            ChainConfig::from_steps([Stimulus, Reaction]),
            ChainConfig::from_steps([Stimulus]),
            ChainConfig::answer_only(),
        ]
    }

    /// Included non-verdict steps, in canonical order.
    pub fn included(&self) -> &[Step] {
        &self.steps
    }

    /// Included steps including the stress state, in canonical order.
    pub fn all_steps(&self) -> Vec<Step> {
        let mut v = self.steps.clone();
        v.push(Step::StressState);
        v
    }

    pub fn includes(&self, step: Step) -> bool {
        step == Step::StressState || self.steps.contains(&step)
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() == 3
    }

    /// Compact label such as `SERA` or `A`.
    pub fn code(&self) -> String {
        self.all_steps().iter().map(|s| s.code()).collect()
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig::full()
    }
}

impl fmt::Display for ChainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ChainConfig {
    type Err = String;

    /// Parses step codes such as `SERA`, `S,E,A`, `s+r` or `A`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut steps = Vec::new();
        for c in s.chars().filter(|c| !matches!(c, ',' | '+' | ' ' | '-')) {
            let step = match c.to_ascii_uppercase() {
                'S' => Step::Stimulus,
                'E' => Step::Evaluation,
                'R' => Step::Reaction,
                'A' => Step::StressState,
                other => return Err(format!("unknown chain step code `{other}` in `{s}`")),
            };
            steps.push(step);
        }
        Ok(ChainConfig::from_steps(steps))
    }
}

impl TryFrom<String> for ChainConfig {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ChainConfig> for String {
    fn from(value: ChainConfig) -> Self {
        value.code()
    }
}

/// Pipeline stage that produced a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    SelfReflect,
    AnswerReflect,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Generate, Stage::SelfReflect, Stage::AnswerReflect];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::SelfReflect => "self_reflect",
            Stage::AnswerReflect => "answer_reflect",
        }
    }

    pub fn next(self) -> Option<Stage> {
        match self {
            Stage::Generate => Some(Stage::SelfReflect),
            Stage::SelfReflect => Some(Stage::AnswerReflect),
            Stage::AnswerReflect => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A post whose chain reached the gold verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SampleRecord")]
pub struct AnnotatedSample {
    pub post: Post,
    pub chain: CognitionChain,
    pub produced_by_stage: Stage,
    pub attempts: u32,
}

#[derive(Deserialize)]
struct SampleRecord {
    post: Post,
    chain: CognitionChain,
    produced_by_stage: Stage,
    attempts: u32,
}

impl TryFrom<SampleRecord> for AnnotatedSample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, Self::Error> {
        AnnotatedSample::new(r.post, r.chain, r.produced_by_stage, r.attempts)
            .ok_or_else(|| "chain verdict does not match the post's gold label".to_string())
    }
}

impl AnnotatedSample {
    /// Returns `None` unless the chain's verdict matches the gold label.
    pub fn new(post: Post, chain: CognitionChain, stage: Stage, attempts: u32) -> Option<Self> {
        (chain.verdict() == post.gold_label).then_some(AnnotatedSample {
            post,
            chain,
            produced_by_stage: stage,
            attempts,
        })
    }

    pub fn id(&self) -> &str {
        &self.post.id
    }

    /// Post text followed by the serialized chain; the quality classifier input.
    pub fn review_text(&self) -> String {
        format!("{}\n{}", self.post.text, serialize_chain(&self.chain))
    }
}

/// Writes the canonical four-line form.
pub fn serialize_chain(chain: &CognitionChain) -> String {
    ablate_chain(chain, &ChainConfig::full())
}

/// Writes only the steps in `cfg` plus the stress-state line, numbered from 1.
pub fn ablate_chain(chain: &CognitionChain, cfg: &ChainConfig) -> String {
    cfg.all_steps()
        .iter()
        .enumerate()
        .map(|(i, step)| format!("{}. {}: {}", i + 1, step.header(), chain.step_text(*step)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Compares sample ids numerically when both are integers, else as strings.
/// This is the canonical processing and export order.
pub fn cmp_ids(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}
