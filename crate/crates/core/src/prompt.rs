//! Prompt templates for chain generation, the two reflection passes and the
//! two baselines.
//!
//! Templates are plain-text assets with `{{slot}}` markers. The built-in set
//! lives under `templates/v1/`; [`TemplateSet::load_dir`] loads an override
//! directory with the same file names. Rendering is pure and deterministic.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ablate_chain, parse_chain, ChainConfig, Step, StressVerdict};

pub const BUILTIN_VERSION: &str = "v1";

/// Delimiter that opens every few-shot example block.
pub const EXAMPLE_DELIMITER: &str = "----- Example -----";

/// Line that introduces the example block in the chain prompt.
const EXAMPLE_INTRO: &str = "I will give you some examples below:";

/// Few-shot count used when the caller does not choose one.
pub const DEFAULT_EXAMPLE_COUNT: usize = 2;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown slot `{{{{{0}}}}}`")]
    UnknownSlot(String),
    #[error("unterminated slot marker at byte {0}")]
    Unterminated(usize),
    #[error("{kind} template must use slots {expected:?}, found {found:?}")]
    SlotMismatch { kind: PromptKind, expected: Vec<Slot>, found: Vec<Slot> },
    #[error("few-shot example {index}: {reason}")]
    InvalidExample { index: usize, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    CogChain,
    SelfReflect,
    AnswerReflect,
    Direct,
    StandardCot,
}

impl PromptKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::CogChain => "cogchain.txt",
            PromptKind::SelfReflect => "self_reflect.txt",
            PromptKind::AnswerReflect => "answer_reflect.txt",
            PromptKind::Direct => "direct.txt",
            PromptKind::StandardCot => "standard_cot.txt",
        }
    }

    /// Slots a template of this kind must contain, and no others.
    pub fn slots(self) -> &'static [Slot] {
        match self {
            PromptKind::CogChain | PromptKind::Direct | PromptKind::StandardCot => &[Slot::Examples, Slot::Expression],
            PromptKind::SelfReflect => &[Slot::Expression, Slot::PriorResponse],
            PromptKind::AnswerReflect => &[Slot::Expression, Slot::PriorResponse, Slot::GoldAnswer],
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::CogChain => "cog_chain",
            PromptKind::SelfReflect => "self_reflect",
            PromptKind::AnswerReflect => "answer_reflect",
            PromptKind::Direct => "direct",
            PromptKind::StandardCot => "standard_cot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Examples,
    Expression,
    PriorResponse,
    GoldAnswer,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Examples => "examples",
            Slot::Expression => "expression",
            Slot::PriorResponse => "prior_response",
            Slot::GoldAnswer => "gold_answer",
        }
    }

    fn from_name(name: &str) -> Option<Slot> {
        match name {
            "examples" => Some(Slot::Examples),
            "expression" => Some(Slot::Expression),
            "prior_response" => Some(Slot::PriorResponse),
            "gold_answer" => Some(Slot::GoldAnswer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(Slot),
}

/// Values substituted into slots. Unset slots render empty.
#[derive(Debug, Clone, Default)]
pub struct SlotValues {
    pub examples: String,
    pub expression: String,
    pub prior_response: String,
    pub gold_answer: String,
}

impl SlotValues {
    fn get(&self, slot: Slot) -> &str {
        match slot {
            Slot::Examples => &self.examples,
            Slot::Expression => &self.expression,
            Slot::PriorResponse => &self.prior_response,
            Slot::GoldAnswer => &self.gold_answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(kind: PromptKind, body: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = body;
        let mut offset = 0;
        while let Some(open) = rest.find("{{") {
            let close = rest[open..].find("}}").ok_or(TemplateError::Unterminated(offset + open))?;
            let name = &rest[open + 2..open + close];
            let slot = Slot::from_name(name.trim()).ok_or_else(|| TemplateError::UnknownSlot(name.to_string()))?;
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            segments.push(Segment::Slot(slot));
            offset += open + close + 2;
            rest = &rest[open + close + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        let tpl = PromptTemplate { kind, segments };

        let found: BTreeSet<Slot> = tpl.slots().into_iter().collect();
        let expected: BTreeSet<Slot> = kind.slots().iter().copied().collect();
        let slot_count = tpl.segments.iter().filter(|s| matches!(s, Segment::Slot(_))).count();
        if found != expected || slot_count != expected.len() {
            return Err(TemplateError::SlotMismatch {
                kind,
                expected: expected.into_iter().collect(),
                found: tpl.slots(),
            });
        }
        Ok(tpl)
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    /// Slots in order of appearance.
    pub fn slots(&self) -> Vec<Slot> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(slot) => Some(*slot),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Fills every slot with the given raw values.
    pub fn render(&self, values: &SlotValues) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(slot) => out.push_str(values.get(*slot)),
            }
        }
        out
    }

    /// Template text before the first occurrence of `slot`.
    fn literal_before(&self, slot: Slot) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(s) if *s == slot => break,
                Segment::Slot(_) => {}
            }
        }
        out
    }

    /// Restricts the numbered step descriptions to `cfg`'s steps, renumbers
    /// them and adjusts the "N-step" count. The full configuration is the
    /// identity.
    pub fn ablated(&self, cfg: &ChainConfig) -> PromptTemplate {
        if cfg.is_full() {
            return self.clone();
        }
        let steps = cfg.all_steps();
        let segments = self
            .segments
            .iter()
            .map(|seg| match seg {
                Segment::Literal(text) => Segment::Literal(ablate_description(text, &steps)),
                other => other.clone(),
            })
            .collect();
        PromptTemplate { kind: self.kind, segments }
    }
}

fn description_step(line: &str) -> Option<Step> {
    let (num, rest) = line.split_once(". ")?;
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Step::ALL.into_iter().find(|s| rest.starts_with(&format!("{}.", s.header())))
}

fn ablate_description(text: &str, keep: &[Step]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut n = 0;
    for line in text.split_inclusive('\n') {
        match description_step(line) {
            Some(step) if keep.contains(&step) => {
                n += 1;
                let (_, rest) = line.split_once(". ").unwrap();
                out.push_str(&format!("{n}. {rest}"));
            }
            Some(_) => {}
            None => out.push_str(line),
        }
    }
    out.replace("4-step reasoning process", &format!("{}-step reasoning process", keep.len()))
}

/// A worked example: expression, rationale and answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub expression: String,
    pub rationale: String,
    pub answer: StressVerdict,
}

impl FewShotExample {
    fn chain_block(&self, cfg: &ChainConfig) -> String {
        let rationale = if cfg.is_full() {
            self.rationale.clone()
        } else {
            match parse_chain(&self.rationale) {
                Ok(chain) => ablate_chain(&chain, cfg),
                Err(_) => self.rationale.clone(),
            }
        };
        format!("{EXAMPLE_DELIMITER}\nIndividual Expression: {}\n{}\n", self.expression, rationale)
    }

    fn cot_block(&self) -> String {
        format!(
            "{EXAMPLE_DELIMITER}\nIndividual Expression: {}\n{}\nAnswer: {}\n",
            self.expression, self.rationale, self.answer
        )
    }

    fn direct_block(&self) -> String {
        let answer = if self.answer.is_stressed() { "Yes" } else { "No" };
        format!("{EXAMPLE_DELIMITER}\nText: {}\nAnswer: {answer}\n\n", self.expression)
    }
}

/// Baseline prompting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Direct,
    StandardCot,
}

/// A complete, versioned set of templates plus the shipped few-shot examples.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    version: String,
    cogchain: PromptTemplate,
    self_reflect: PromptTemplate,
    answer_reflect: PromptTemplate,
    direct: PromptTemplate,
    standard_cot: PromptTemplate,
    chain_examples: Vec<FewShotExample>,
    cot_examples: Vec<FewShotExample>,
}

static BUILTIN: LazyLock<TemplateSet> = LazyLock::new(|| {
    TemplateSet::from_sources(
        BUILTIN_VERSION,
        [
            include_str!("../templates/v1/cogchain.txt"),
            include_str!("../templates/v1/self_reflect.txt"),
            include_str!("../templates/v1/answer_reflect.txt"),
            include_str!("../templates/v1/direct.txt"),
            include_str!("../templates/v1/standard_cot.txt"),
        ],
        include_str!("../templates/v1/examples_cogchain.json"),
        include_str!("../templates/v1/examples_cot.json"),
    )
    .expect("built-in templates are valid")
});

impl TemplateSet {
    /// The templates compiled into the crate.
    pub fn builtin() -> &'static TemplateSet {
        &BUILTIN
    }

    fn from_sources(
        version: &str,
        bodies: [&str; 5],
        chain_examples: &str,
        cot_examples: &str,
    ) -> Result<Self, TemplateError> {
        let [cc, sr, ar, d, cot] = bodies;
        let chain_examples: Vec<FewShotExample> = serde_json::from_str(chain_examples)
            .map_err(|source| TemplateError::Json { path: "examples_cogchain.json".into(), source })?;
        let cot_examples: Vec<FewShotExample> = serde_json::from_str(cot_examples)
            .map_err(|source| TemplateError::Json { path: "examples_cot.json".into(), source })?;
        validate_chain_examples(&chain_examples)?;
        Ok(TemplateSet {
            version: version.to_string(),
            cogchain: PromptTemplate::parse(PromptKind::CogChain, cc)?,
            self_reflect: PromptTemplate::parse(PromptKind::SelfReflect, sr)?,
            answer_reflect: PromptTemplate::parse(PromptKind::AnswerReflect, ar)?,
            direct: PromptTemplate::parse(PromptKind::Direct, d)?,
            standard_cot: PromptTemplate::parse(PromptKind::StandardCot, cot)?,
            chain_examples,
            cot_examples,
        })
    }

    /// Loads a template directory; the version is the directory name.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|source| TemplateError::Io { path: path.display().to_string(), source })
        };
        let bodies = [
            read(PromptKind::CogChain.file_name())?,
            read(PromptKind::SelfReflect.file_name())?,
            read(PromptKind::AnswerReflect.file_name())?,
            read(PromptKind::Direct.file_name())?,
            read(PromptKind::StandardCot.file_name())?,
        ];
        let version = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into());
        TemplateSet::from_sources(
            &version,
            [&bodies[0], &bodies[1], &bodies[2], &bodies[3], &bodies[4]],
            &read("examples_cogchain.json")?,
            &read("examples_cot.json")?,
        )
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn template(&self, kind: PromptKind) -> &PromptTemplate {
        match kind {
            PromptKind::CogChain => &self.cogchain,
            PromptKind::SelfReflect => &self.self_reflect,
            PromptKind::AnswerReflect => &self.answer_reflect,
            PromptKind::Direct => &self.direct,
            PromptKind::StandardCot => &self.standard_cot,
        }
    }

    /// Shipped chain-format examples.
    pub fn chain_examples(&self) -> &[FewShotExample] {
        &self.chain_examples
    }

    /// Shipped free-form reasoning examples for the standard CoT baseline.
    pub fn cot_examples(&self) -> &[FewShotExample] {
        &self.cot_examples
    }

    /// The first `k` shipped chain examples (fewer if not available).
    pub fn default_examples(&self, k: usize) -> &[FewShotExample] {
        &self.chain_examples[..k.min(self.chain_examples.len())]
    }

    pub fn render_cogchain(&self, examples: &[FewShotExample], expression: &str) -> String {
        self.render_cogchain_ablated(examples, expression, &ChainConfig::full())
    }

    /// Chain prompt restricted to the steps in `cfg`; examples are ablated the
    /// same way.
    pub fn render_cogchain_ablated(&self, examples: &[FewShotExample], expression: &str, cfg: &ChainConfig) -> String {
        let examples = examples.iter().map(|e| e.chain_block(cfg)).collect::<Vec<_>>().join("\n");
        self.cogchain.ablated(cfg).render(&SlotValues {
            examples,
            expression: expression.to_string(),
            ..Default::default()
        })
    }

    pub fn render_self_reflect(&self, expression: &str, prior_response: &str) -> String {
        self.self_reflect.render(&SlotValues {
            expression: expression.to_string(),
            prior_response: prior_response_block(prior_response),
            ..Default::default()
        })
    }

    pub fn render_answer_reflect(&self, expression: &str, prior_response: &str, gold: StressVerdict) -> String {
        self.answer_reflect.render(&SlotValues {
            expression: expression.to_string(),
            prior_response: prior_response_block(prior_response),
            gold_answer: gold_answer_block(gold),
            ..Default::default()
        })
    }

    pub fn render_baseline(&self, kind: Baseline, examples: &[FewShotExample], expression: &str) -> String {
        let (template, examples) = match kind {
            Baseline::Direct => (&self.direct, examples.iter().map(FewShotExample::direct_block).collect::<String>()),
            Baseline::StandardCot => {
                let blocks = examples.iter().map(FewShotExample::cot_block).collect::<Vec<_>>().join("\n");
                let examples = if blocks.is_empty() { blocks } else { format!("\n{blocks}") };
                (&self.standard_cot, examples)
            }
        };
        template.render(&SlotValues { examples, expression: expression.to_string(), ..Default::default() })
    }

    /// Task instruction for instruction-tuning records: the chain prompt's
    /// identity, task and reasoning description, without the example block.
    pub fn instruction(&self) -> String {
        let head = self.cogchain.literal_before(Slot::Examples);
        let head = head.trim_end();
        head.strip_suffix(EXAMPLE_INTRO).unwrap_or(head).trim_end().to_string()
    }

    /// Instruction followed by the example block.
    pub fn instruction_with_examples(&self, examples: &[FewShotExample]) -> String {
        let blocks = examples.iter().map(|e| e.chain_block(&ChainConfig::full())).collect::<Vec<_>>().join("\n");
        format!("{}\n\n{EXAMPLE_INTRO}\n{}", self.instruction(), blocks.trim_end())
    }
}

/// Content placed in the `prior_response` slot.
pub fn prior_response_block(prior_response: &str) -> String {
    format!("4-step reasoning process:\n{}\n", prior_response.trim_end())
}

/// Content placed in the `gold_answer` slot.
pub fn gold_answer_block(gold: StressVerdict) -> String {
    format!("Real stress state: {gold}\n")
}

fn validate_chain_examples(examples: &[FewShotExample]) -> Result<(), TemplateError> {
    for (index, ex) in examples.iter().enumerate() {
        let chain =
            parse_chain(&ex.rationale).map_err(|e| TemplateError::InvalidExample { index, reason: e.to_string() })?;
        if chain.verdict() != ex.answer {
            return Err(TemplateError::InvalidExample {
                index,
                reason: format!("rationale concludes {} but answer is {}", chain.verdict(), ex.answer),
            });
        }
    }
    Ok(())
}

/// [`TemplateSet::render_cogchain`] on the built-in templates.
pub fn render_cogchain(examples: &[FewShotExample], expression: &str) -> String {
    TemplateSet::builtin().render_cogchain(examples, expression)
}

/// [`TemplateSet::render_self_reflect`] on the built-in templates.
pub fn render_self_reflect(expression: &str, prior_response: &str) -> String {
    TemplateSet::builtin().render_self_reflect(expression, prior_response)
}

/// [`TemplateSet::render_answer_reflect`] on the built-in templates.
pub fn render_answer_reflect(expression: &str, prior_response: &str, gold: StressVerdict) -> String {
    TemplateSet::builtin().render_answer_reflect(expression, prior_response, gold)
}

/// [`TemplateSet::render_baseline`] on the built-in templates.
pub fn render_baseline(kind: Baseline, examples: &[FewShotExample], expression: &str) -> String {
    TemplateSet::builtin().render_baseline(kind, examples, expression)
}
