use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rated aspects of an explanation, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aspect {
    Comprehension,
    Depth,
    Relevance,
    Logic,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [Aspect::Comprehension, Aspect::Depth, Aspect::Relevance, Aspect::Logic];

    pub fn code(self) -> &'static str {
        match self {
            Aspect::Comprehension => "CO",
            Aspect::Depth => "DE",
            Aspect::Relevance => "RE",
            Aspect::Logic => "LO",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Comprehension => "Comprehension",
            Aspect::Depth => "Depth",
            Aspect::Relevance => "Relevance",
            Aspect::Logic => "Logic",
        }
    }

    fn matches(self, column: &str) -> bool {
        let c = column.trim();
        c.eq_ignore_ascii_case(self.code()) || c.eq_ignore_ascii_case(self.name())
    }
}

#[derive(Debug, Error)]
pub enum HumanEvalError {
    #[error("{location}: {aspect} score {value} outside 1..=5")]
    OutOfRange { location: String, aspect: &'static str, value: String },
    #[error("{location}: missing column {column}")]
    MissingColumn { location: String, column: String },
    #[error("{location}: {message}")]
    Malformed { location: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no ratings to aggregate")]
    Empty,
}

/// One rated sample; scores are in [`Aspect::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEvalRow {
    pub sample_id: String,
    pub scores: [u8; 4],
}

impl HumanEvalRow {
    /// Mean of the four aspects.
    pub fn overall(&self) -> f64 {
        self.scores.iter().map(|&s| s as f64).sum::<f64>() / 4.0
    }
}

/// All ratings of one rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEvalSheet {
    pub rater: String,
    pub rows: Vec<HumanEvalRow>,
}

/// Aspect means in CO, DE, RE, LO, OV order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AspectMeans {
    #[serde(rename = "CO")]
    pub co: f64,
    #[serde(rename = "DE")]
    pub de: f64,
    #[serde(rename = "RE")]
    pub re: f64,
    #[serde(rename = "LO")]
    pub lo: f64,
    #[serde(rename = "OV")]
    pub ov: f64,
}

impl AspectMeans {
    pub fn values(&self) -> [f64; 5] {
        [self.co, self.de, self.re, self.lo, self.ov]
    }

    fn from_values(v: [f64; 5]) -> Self {
        AspectMeans { co: v[0], de: v[1], re: v[2], lo: v[3], ov: v[4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterSummary {
    pub rater: String,
    pub samples: usize,
    pub means: AspectMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub raters: Vec<RaterSummary>,
    /// Mean over raters of each rater's means.
    pub aggregate: AspectMeans,
}

impl HumanEvalSummary {
    /// Header `CO,DE,RE,LO,OV` and one row of aggregate means.
    pub fn to_csv(&self) -> String {
        let row: Vec<String> = self.aggregate.values().iter().map(|v| format!("{v:.4}")).collect();
        format!("CO,DE,RE,LO,OV\n{}\n", row.join(","))
    }

    /// One row per rater, then the aggregate under rater `all`.
    pub fn to_csv_by_rater(&self) -> String {
        let mut out = String::from("rater,CO,DE,RE,LO,OV\n");
        let rows = self.raters.iter().map(|r| (r.rater.as_str(), &r.means)).chain([("all", &self.aggregate)]);
        for (rater, means) in rows {
            let vals: Vec<String> = means.values().iter().map(|v| format!("{v:.4}")).collect();
            out.push_str(&format!("{rater},{}\n", vals.join(",")));
        }
        out
    }
}

/// Per-aspect means across raters and samples. Overall is recomputed from
/// the four aspects; any score outside 1..=5 rejects the input.
pub fn aggregate_human_eval(sheets: &[HumanEvalSheet]) -> Result<HumanEvalSummary, HumanEvalError> {
    let mut raters = Vec::new();
    for sheet in sheets {
        if sheet.rows.is_empty() {
            continue;
        }
        let mut sums = [0.0f64; 5];
        for row in &sheet.rows {
            for (aspect, &score) in Aspect::ALL.iter().zip(&row.scores) {
                if !(1..=5).contains(&score) {
                    return Err(HumanEvalError::OutOfRange {
                        location: format!("rater {} sample {}", sheet.rater, row.sample_id),
                        aspect: aspect.code(),
                        value: score.to_string(),
                    });
                }
            }
            for (s, &score) in sums.iter_mut().zip(&row.scores) {
                *s += score as f64;
            }
            sums[4] += row.overall();
        }
        let n = sheet.rows.len() as f64;
        raters.push(RaterSummary {
            rater: sheet.rater.clone(),
            samples: sheet.rows.len(),
            means: AspectMeans::from_values(sums.map(|s| s / n)),
        });
    }
    if raters.is_empty() {
        return Err(HumanEvalError::Empty);
    }
    let mut agg = [0.0f64; 5];
    for r in &raters {
        for (a, v) in agg.iter_mut().zip(r.means.values()) {
            *a += v;
        }
    }
    let n = raters.len() as f64;
    Ok(HumanEvalSummary { raters, aggregate: AspectMeans::from_values(agg.map(|a| a / n)) })
}

/// One rating as exported by the review service, a line of a `.jsonl`
/// sheet file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater: String,
    pub sample_id: String,
    #[serde(rename = "CO", alias = "Comprehension")]
    pub co: u8,
    #[serde(rename = "DE", alias = "Depth")]
    pub de: u8,
    #[serde(rename = "RE", alias = "Relevance")]
    pub re: u8,
    #[serde(rename = "LO", alias = "Logic")]
    pub lo: u8,
}

impl RatingRecord {
    pub fn scores(&self) -> [u8; 4] {
        [self.co, self.de, self.re, self.lo]
    }
}

fn push_row(sheets: &mut Vec<HumanEvalSheet>, rater: String, row: HumanEvalRow) {
    match sheets.iter_mut().find(|s| s.rater == rater) {
        Some(sheet) => sheet.rows.push(row),
        None => sheets.push(HumanEvalSheet { rater, rows: vec![row] }),
    }
}

fn read_jsonl_sheets(path: &Path) -> Result<Vec<HumanEvalSheet>, HumanEvalError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| HumanEvalError::Io { path: display.clone(), source })?;
    let mut sheets = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let location = format!("{display}:{}", n + 1);
        let r: RatingRecord = serde_json::from_str(line)
            .map_err(|e| HumanEvalError::Malformed { location: location.clone(), message: e.to_string() })?;
        let scores = r.scores();
        if let Some((aspect, value)) = Aspect::ALL.into_iter().zip(scores).find(|(_, v)| !(1..=5).contains(v)) {
            return Err(HumanEvalError::OutOfRange { location, aspect: aspect.code(), value: value.to_string() });
        }
        push_row(&mut sheets, r.rater, HumanEvalRow { sample_id: r.sample_id, scores });
    }
    Ok(sheets)
}

/// Reads a rating CSV with columns `sample_id` and `CO,DE,RE,LO` (or the
/// aspect names); an `OV` column is ignored. With a `rater` column the file
/// may hold several sheets; otherwise the rater is the file stem. A `.jsonl`
/// file is read as one [`RatingRecord`] per line.
pub fn read_sheets(path: &Path) -> Result<Vec<HumanEvalSheet>, HumanEvalError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return read_jsonl_sheets(path);
    }
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(&display, e))?;
    let headers = reader.headers().map_err(|e| csv_err(&display, e))?.clone();
    let find = |pred: &dyn Fn(&str) -> bool| headers.iter().position(pred);
    let missing =
        |column: &str| HumanEvalError::MissingColumn { location: format!("{display}:1"), column: column.into() };
    let id_col = find(&|h| h.trim().eq_ignore_ascii_case("sample_id") || h.trim().eq_ignore_ascii_case("id"))
        .ok_or_else(|| missing("sample_id"))?;
    let rater_col = find(&|h| h.trim().eq_ignore_ascii_case("rater"));
    let mut aspect_cols = [0usize; 4];
    for (slot, aspect) in aspect_cols.iter_mut().zip(Aspect::ALL) {
        *slot = find(&|h| aspect.matches(h)).ok_or_else(|| missing(aspect.code()))?;
    }
    let default_rater = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut sheets: Vec<HumanEvalSheet> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let location = format!("{display}:{line}");
        let mut scores = [0u8; 4];
        for ((score, &col), aspect) in scores.iter_mut().zip(&aspect_cols).zip(Aspect::ALL) {
            let raw = record.get(col).unwrap_or("").trim();
            *score = raw.parse::<u8>().ok().filter(|s| (1..=5).contains(s)).ok_or_else(|| {
                HumanEvalError::OutOfRange { location: location.clone(), aspect: aspect.code(), value: raw.to_string() }
            })?;
        }
        let rater = rater_col
            .and_then(|c| record.get(c))
            .map(|r| r.trim().to_string())
            .unwrap_or_else(|| default_rater.clone());
        let row = HumanEvalRow { sample_id: record.get(id_col).unwrap_or("").trim().to_string(), scores };
        push_row(&mut sheets, rater, row);
    }
    Ok(sheets)
}

fn csv_err(path: &str, e: csv::Error) -> HumanEvalError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => HumanEvalError::Io { path: path.to_string(), source },
        kind => HumanEvalError::Malformed { location: format!("{path}:{line}"), message: format!("{kind:?}") },
    }
}
