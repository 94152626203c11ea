use std::collections::HashSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{cmp_ids, parse_chain, serialize_chain, AnnotatedSample, Split};
use crate::prompt::TemplateSet;

/// One instruction-tuning record. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlpacaRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

/// Separator between instruction, input and output when a record is
/// flattened into one training string.
pub const INSTRUCTION_SEPARATOR: &str = "\n\n";

/// Which record fields contribute to the training loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMaskSpec {
    pub supervised: String,
    pub masked: Vec<String>,
    pub template_version: String,
}

impl LossMaskSpec {
    pub fn new(template_version: &str) -> Self {
        LossMaskSpec {
            supervised: "output".into(),
            masked: vec!["instruction".into(), "input".into()],
            template_version: template_version.to_string(),
        }
    }
}

/// Byte spans over `instruction + sep + input + sep + output`. Each masked
/// span includes the separator that follows its field, so the spans
/// partition the whole string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpans {
    pub text: String,
    pub masked: Vec<Range<usize>>,
    pub supervised: Range<usize>,
}

pub fn mask_spans(record: &AlpacaRecord, sep: &str) -> MaskSpans {
    let text = format!("{}{sep}{}{sep}{}", record.instruction, record.input, record.output);
    let a = record.instruction.len() + sep.len();
    let b = a + record.input.len() + sep.len();
    MaskSpans { masked: vec![0..a, a..b], supervised: b..text.len(), text }
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    /// Append the shipped few-shot examples to the instruction.
    pub include_examples: bool,
    /// Number of examples when `include_examples` is set.
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub records: usize,
    pub path: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("sample {sample_id}: exported chain no longer parses or contradicts the gold label: {reason}")]
    Corrupt { sample_id: String, reason: String },
    #[error("sample {0} belongs to the test split and cannot be exported")]
    TestSplit(String),
    #[error("sample {0} appears twice")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

/// Sidecar location: `<stem>.mask.json` next to the export.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.mask.json"))
}

/// Writes samples as Alpaca JSONL in canonical id order, plus the mask
/// sidecar. Every output is re-parsed before anything is written.
pub fn export_alpaca(
    samples: &[AnnotatedSample],
    templates: &TemplateSet,
    opts: &ExportOptions,
    path: &Path,
) -> Result<ExportSummary, ExportError> {
    let mut sorted: Vec<&AnnotatedSample> = samples.iter().collect();
    sorted.sort_by(|a, b| cmp_ids(a.id(), b.id()));
    let instruction = if opts.include_examples {
        templates.instruction_with_examples(templates.default_examples(opts.examples))
    } else {
        templates.instruction()
    };
    let mut seen = HashSet::new();
    let mut out = String::new();
    for s in sorted {
        if !seen.insert(s.id()) {
            return Err(ExportError::DuplicateId(s.id().to_string()));
        }
        if s.post.split == Split::Test {
            return Err(ExportError::TestSplit(s.id().to_string()));
        }
        let output = serialize_chain(&s.chain);
        match parse_chain(&output) {
            Ok(c) if c.verdict() == s.post.gold_label => {}
            Ok(c) => {
                return Err(ExportError::Corrupt {
                    sample_id: s.id().to_string(),
                    reason: format!("verdict {} but gold {}", c.verdict(), s.post.gold_label),
                })
            }
            Err(e) => return Err(ExportError::Corrupt { sample_id: s.id().to_string(), reason: e.to_string() }),
        }
        let record = AlpacaRecord { instruction: instruction.clone(), input: s.post.text.clone(), output };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| ExportError::Io { path, source }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(path, out).map_err(io(path))?;
    let sidecar = sidecar_path(path);
    let mut spec = serde_json::to_string_pretty(&LossMaskSpec::new(templates.version())).expect("spec serializes");
    spec.push('\n');
    std::fs::write(&sidecar, spec).map_err(io(&sidecar))?;
    Ok(ExportSummary { records: seen.len(), path: path.to_path_buf(), sidecar })
}

/// Re-reads an export and checks it against the samples it was made from:
/// exact key set, one line per sample in id order, matching input, and an
/// output that parses to the gold verdict.
pub fn revalidate_export(path: &Path, samples: &[AnnotatedSample]) -> Result<usize, ExportError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ExportError::Io { path: display.clone(), source })?;
    let invalid = |line: usize, message: String| ExportError::Invalid { path: display.clone(), line, message };
    let mut sorted: Vec<&AnnotatedSample> = samples.iter().collect();
    sorted.sort_by(|a, b| cmp_ids(a.id(), b.id()));
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != sorted.len() {
        return Err(invalid(lines.len(), format!("{} records for {} samples", lines.len(), sorted.len())));
    }
    let mut instruction: Option<String> = None;
    for (i, (line, sample)) in lines.iter().zip(sorted).enumerate() {
        let n = i + 1;
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| invalid(n, e.to_string()))?;
        let keys: Vec<&str> = value.as_object().map(|o| o.keys().map(String::as_str).collect()).unwrap_or_default();
        let mut sorted_keys = keys.clone();
        sorted_keys.sort_unstable();
        if sorted_keys != ["input", "instruction", "output"] {
            return Err(invalid(n, format!("unexpected keys {keys:?}")));
        }
        let record: AlpacaRecord = serde_json::from_value(value).map_err(|e| invalid(n, e.to_string()))?;
        if record.input != sample.post.text {
            return Err(invalid(n, format!("input does not match sample {}", sample.id())));
        }
        match &instruction {
            Some(first) if *first != record.instruction => {
                return Err(invalid(n, "instruction differs from the first record".into()))
            }
            Some(_) => {}
            None => instruction = Some(record.instruction.clone()),
        }
        let chain = parse_chain(&record.output).map_err(|e| invalid(n, format!("output does not parse: {e}")))?;
        if chain.verdict() != sample.post.gold_label {
            return Err(invalid(n, format!("output verdict {} but gold {}", chain.verdict(), sample.post.gold_label)));
        }
    }
    Ok(lines.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_partition_the_text() {
        let r = AlpacaRecord { instruction: "do it".into(), input: "ünïcode".into(), output: "1. x".into() };
        let m = mask_spans(&r, "\n\n");
        assert_eq!(m.masked[0].start, 0);
        assert_eq!(m.masked[0].end, m.masked[1].start);
        assert_eq!(m.masked[1].end, m.supervised.start);
        assert_eq!(m.supervised.end, m.text.len());
        assert_eq!(&m.text[m.supervised.clone()], "1. x");
        assert_eq!(&m.text[m.masked[1].clone()], "ünïcode\n\n");
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/train.jsonl")), Path::new("out/train.mask.json"));
    }
}
