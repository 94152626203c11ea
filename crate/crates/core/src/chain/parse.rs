use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::{AppraisalCategory, CognitionChain, Step, StressVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing step `{0}`")]
    MissingStep(Step),
    #[error("ambiguous step `{0}`")]
    AmbiguousStep(Step),
    #[error("step `{0}` is empty")]
    EmptyStep(Step),
    #[error("unrecognized stress verdict in `{0}`")]
    UnrecognizedVerdict(String),
}

impl ParseError {
    /// The step the failure is about.
    pub fn step(&self) -> Step {
        match self {
            ParseError::MissingStep(s) | ParseError::AmbiguousStep(s) | ParseError::EmptyStep(s) => *s,
            ParseError::UnrecognizedVerdict(_) => Step::StressState,
        }
    }
}

// Optional enumeration ("1.", "1)", "-", "*", "#"), optional bold markers,
// the step name, then a separator or end of line.
static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^[ \t]*(?:#{1,6}[ \t]*)?(?:(?:\d+[ \t]*[.)]|[-*•])[ \t]*)?(?:\*\*|__)?[ \t]*(stimulus|evaluation|reaction|stress[ \t]+state)[ \t]*(?:\*\*|__)?[ \t]*(?:[:：.\-–][ \t]*(?:\*\*|__)?(.*)|$)",
    )
    .unwrap()
});

static VERDICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(non[-\s]?stressed|not\s+stressed|stressed)\b").unwrap());

static APPRAISAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(beneficial|harmful|irrelevant)\b").unwrap());

fn step_from_name(name: &str) -> Step {
    match name.to_ascii_lowercase().split_whitespace().next() {
        Some("stimulus") => Step::Stimulus,
        Some("evaluation") => Step::Evaluation,
        Some("reaction") => Step::Reaction,
        _ => Step::StressState,
    }
}

fn verdict_from_token(token: &str) -> StressVerdict {
    let t = token.to_ascii_lowercase();
    if t.starts_with("non") || t.starts_with("not") {
        StressVerdict::NonStressed
    } else {
        StressVerdict::Stressed
    }
}

/// First verdict token in `text` (word-bounded, case-insensitive).
pub fn find_verdict_token(text: &str) -> Option<StressVerdict> {
    VERDICT.find(text).map(|m| verdict_from_token(m.as_str()))
}

/// Last verdict token in `text`.
pub(crate) fn find_last_verdict_token(text: &str) -> Option<StressVerdict> {
    VERDICT.find_iter(text).last().map(|m| verdict_from_token(m.as_str()))
}

pub(crate) fn find_appraisal(text: &str) -> Option<AppraisalCategory> {
    APPRAISAL.find(text).map(|m| match m.as_str().to_ascii_lowercase().as_str() {
        "beneficial" => AppraisalCategory::Beneficial,
        "harmful" => AppraisalCategory::Harmful,
        _ => AppraisalCategory::Irrelevant,
    })
}

struct Header<'a> {
    step: Step,
    inline: &'a str,
    continuation: Vec<&'a str>,
}

impl Header<'_> {
    fn joined(&self) -> String {
        let mut parts = vec![self.inline.trim()];
        parts.extend(self.continuation.iter().map(|l| l.trim()));
        parts.retain(|p| !p.is_empty());
        parts.join(" ")
    }
}

fn scan_headers(raw: &str) -> Vec<Header<'_>> {
    let mut headers: Vec<Header<'_>> = Vec::new();
    for line in raw.lines() {
        if let Some(caps) = HEADER.captures(line) {
            headers.push(Header {
                step: step_from_name(&caps[1]),
                inline: caps.get(2).map_or("", |m| m.as_str()),
                continuation: Vec::new(),
            });
        } else if let Some(last) = headers.last_mut() {
            last.continuation.push(line);
        }
    }
    headers
}

/// Checks one Stimulus-led block; returns the four headers in order.
fn check_block<'h, 'a>(block: &'h [Header<'a>]) -> Result<[&'h Header<'a>; 4], ParseError> {
    let mut found: [Option<&Header<'_>>; 4] = [None, None, None, None];
    let mut last_index = 0usize;
    for h in block {
        let idx = h.step as usize;
        if found[idx].is_some() {
            return Err(ParseError::AmbiguousStep(h.step));
        }
        if idx < last_index {
            return Err(ParseError::AmbiguousStep(h.step));
        }
        last_index = idx;
        found[idx] = Some(h);
    }
    for step in Step::ALL {
        if found[step as usize].is_none() {
            return Err(ParseError::MissingStep(step));
        }
    }
    Ok(found.map(|h| h.unwrap()))
}

/// Parses an LLM completion into a [`CognitionChain`].
///
/// Step headers are matched case-insensitively at line start, with or
/// without enumeration (`1.`, `1)`, `-`) and markdown emphasis. Text on
/// following lines continues the previous step. When the completion holds
/// several Stimulus-led blocks (for example a critique of the old chain
/// followed by the new one), the last complete block is used.
pub fn parse_chain(raw: &str) -> Result<CognitionChain, ParseError> {
    let headers = scan_headers(raw);
    if headers.is_empty() {
        return Err(ParseError::MissingStep(Step::Stimulus));
    }

    let starts: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.step == Step::Stimulus).map(|(i, _)| i).collect();
    if starts.is_empty() {
        return Err(ParseError::MissingStep(Step::Stimulus));
    }

    let mut last_err = None;
    for (k, &start) in starts.iter().enumerate().rev() {
        let end = starts.get(k + 1).copied().unwrap_or(headers.len());
        match check_block(&headers[start..end]) {
            Ok([s, e, r, a]) => return build_chain(s, e, r, a),
            Err(err) => {
                if last_err.is_none() {
                    last_err = Some(err);
                }
            }
        }
    }
    Err(last_err.expect("at least one block was checked"))
}

fn build_chain(s: &Header<'_>, e: &Header<'_>, r: &Header<'_>, a: &Header<'_>) -> Result<CognitionChain, ParseError> {
    // Same-line verdict takes precedence over trailing prose.
    let verdict = find_verdict_token(a.inline)
        .or_else(|| find_verdict_token(&a.joined()))
        .ok_or_else(|| ParseError::UnrecognizedVerdict(a.joined()))?;
    let stimulus = s.joined();
    CognitionChain::new(Some(stimulus.as_str()), &e.joined(), &r.joined(), verdict)
}
