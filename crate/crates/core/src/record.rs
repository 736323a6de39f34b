//! Translation records: the unit every detector, analysis and pipeline step
//! consumes.
//!
//! A corpus file is JSON Lines, one record object per line. Mandatory keys are
//! `id`, `src`, `src_tokens`, `mt`, `mt_tokens` and `token_logprobs`; every other
//! known key is optional and unknown keys are carried through untouched.
//!
//! Token sequences end with an explicit end-of-sequence token, so the last
//! attention column is always the source EOS position. Log-probabilities are
//! natural logs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Tolerance on attention row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

const MANDATORY_KEYS: [&str; 6] = ["id", "src", "src_tokens", "mt", "mt_tokens", "token_logprobs"];

/// Head-averaged cross-attention of the last decoder layer.
///
/// Rows are target positions and columns are source positions, stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl AttentionMatrix {
    /// Builds a matrix from rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut weights = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::argument(format!(
                    "attention row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            weights.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    /// Total incoming attention mass of a source position.
    pub fn column_sum(&self, col: usize) -> f64 {
        self.iter_rows().map(|r| r[col]).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

impl Serialize for AttentionMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for row in self.iter_rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// Human judgment of one translation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub correct: bool,
    /// Oscillatory hallucination.
    pub osc: bool,
    /// Strongly (not fully) detached hallucination.
    pub sd: bool,
    /// Fully detached hallucination.
    pub fd: bool,
    /// Undergeneration.
    pub ug: bool,
    /// Named-entity error.
    pub ne: bool,
    pub other_error: bool,
}

impl Annotation {
    pub fn is_hallucination(&self) -> bool {
        self.osc || self.sd || self.fd
    }

    pub fn has_pathology(&self) -> bool {
        self.is_hallucination() || self.ug || self.ne || self.other_error
    }
}

/// One source/translation pair with its exported model signals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationRecord {
    pub id: String,
    pub src: String,
    pub src_tokens: Vec<String>,
    pub mt: String,
    pub mt_tokens: Vec<String>,
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Natural-log probability of each generated token, aligned with `mt_tokens`.
    pub token_logprobs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_hypotheses: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_hal_labels: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
    /// Unrecognised top-level keys, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl TranslationRecord {
    /// A record carrying only the mandatory fields.
    pub fn new(
        id: impl Into<String>,
        src: impl Into<String>,
        src_tokens: Vec<String>,
        mt: impl Into<String>,
        mt_tokens: Vec<String>,
        token_logprobs: Vec<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            src: src.into(),
            src_tokens,
            mt: mt.into(),
            mt_tokens,
            reference: None,
            token_logprobs,
            attention: None,
            mc_hypotheses: None,
            external_scores: None,
            token_hal_labels: None,
            annotation: None,
            extra: Map::new(),
        }
    }

    pub fn external(&self, channel: &str) -> Option<f64> {
        self.external_scores.as_ref()?.get(channel).copied()
    }

    /// Serializes the record as a single JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Parses one corpus line. Errors report line 1; use [`parse_record_at`] to
/// attach the real line number.
pub fn parse_record(line: &str) -> Result<TranslationRecord> {
    parse_record_at(line, 1)
}

pub fn parse_record_at(line: &str, lineno: usize) -> Result<TranslationRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Parse {
            line: lineno,
            message: "expected a JSON object".into(),
        });
    };
    let schema = |field: &str, message: String| Error::Schema {
        line: lineno,
        field: field.to_string(),
        message,
    };
    for key in MANDATORY_KEYS {
        if !obj.contains_key(key) {
            return Err(schema(key, "missing mandatory field".into()));
        }
    }

    fn take<T: DeserializeOwned>(
        obj: &mut Map<String, Value>,
        key: &str,
        lineno: usize,
    ) -> Result<Option<T>> {
        match obj.remove(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v).map(Some).map_err(|e| Error::Schema {
                line: lineno,
                field: key.to_string(),
                message: e.to_string(),
            }),
        }
    }
    // Mandatory keys were checked above, so `take` yields Some for them.
    let id: String = take(&mut obj, "id", lineno)?.unwrap();
    let src: String = take(&mut obj, "src", lineno)?.unwrap();
    let src_tokens: Vec<String> = take(&mut obj, "src_tokens", lineno)?.unwrap();
    let mt: String = take(&mut obj, "mt", lineno)?.unwrap();
    let mt_tokens: Vec<String> = take(&mut obj, "mt_tokens", lineno)?.unwrap();
    let token_logprobs: Vec<f64> = take(&mut obj, "token_logprobs", lineno)?.unwrap();
    let reference: Option<String> = take(&mut obj, "ref", lineno)?;
    let attention_rows: Option<Vec<Vec<f64>>> = take(&mut obj, "attention", lineno)?;
    let mc_hypotheses: Option<Vec<String>> = take(&mut obj, "mc_hypotheses", lineno)?;
    let external_scores: Option<BTreeMap<String, f64>> =
        take(&mut obj, "external_scores", lineno)?;
    let token_hal_labels: Option<Vec<u8>> = take(&mut obj, "token_hal_labels", lineno)?;
    let annotation: Option<Annotation> = take(&mut obj, "annotation", lineno)?;

    if token_logprobs.len() != mt_tokens.len() {
        return Err(schema(
            "token_logprobs",
            format!(
                "length {} does not match {} mt_tokens",
                token_logprobs.len(),
                mt_tokens.len()
            ),
        ));
    }
    let attention = match attention_rows {
        None => None,
        Some(rows) => {
            let m = AttentionMatrix::from_rows(&rows)
                .map_err(|e| schema("attention", e.to_string()))?;
            let cols = if rows.is_empty() { src_tokens.len() } else { m.cols() };
            if m.rows() != mt_tokens.len() || cols != src_tokens.len() {
                return Err(schema(
                    "attention",
                    format!(
                        "shape {}x{} does not match {} mt_tokens x {} src_tokens",
                        m.rows(),
                        m.cols(),
                        mt_tokens.len(),
                        src_tokens.len()
                    ),
                ));
            }
            Some(m)
        }
    };
    if let Some(labels) = &token_hal_labels {
        if labels.len() != mt_tokens.len() {
            return Err(schema(
                "token_hal_labels",
                format!("length {} does not match {} mt_tokens", labels.len(), mt_tokens.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(schema("token_hal_labels", format!("label {bad} is not 0 or 1")));
        }
    }

    Ok(TranslationRecord {
        id,
        src,
        src_tokens,
        mt,
        mt_tokens,
        reference,
        token_logprobs,
        attention,
        mc_hypotheses,
        external_scores,
        token_hal_labels,
        annotation,
        extra: obj,
    })
}

/// Parses every non-blank line of a corpus, yielding `(line number, result)`.
pub fn parse_lines(text: &str) -> impl Iterator<Item = (usize, Result<TranslationRecord>)> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, parse_record_at(l, i + 1)))
}

/// Parses a whole corpus, failing on the first bad line or duplicate id.
pub fn parse_corpus(text: &str) -> Result<Vec<TranslationRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, rec) in parse_lines(text) {
        let rec = rec?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Schema {
                line: lineno,
                field: "id".into(),
                message: format!("duplicate id `{}`", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// One violated record invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, message: String) {
        self.violations.push(Violation { field, message });
    }
}

/// Lists every invariant the record violates.
pub fn validate_record(rec: &TranslationRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    if rec.id.is_empty() {
        report.push("id", "empty id".into());
    }
    if rec.src_tokens.is_empty() {
        report.push("src_tokens", "no tokens (EOS marker required)".into());
    }
    if rec.mt_tokens.is_empty() {
        report.push("mt_tokens", "no tokens (EOS marker required)".into());
    }

    if rec.token_logprobs.len() != rec.mt_tokens.len() {
        report.push(
            "token_logprobs",
            format!(
                "length {} does not match {} mt_tokens",
                rec.token_logprobs.len(),
                rec.mt_tokens.len()
            ),
        );
    }
    for (k, &lp) in rec.token_logprobs.iter().enumerate() {
        if !lp.is_finite() {
            report.push("token_logprobs", format!("non-finite log-probability at position {k}"));
        } else if lp > 0.0 {
            report.push("token_logprobs", format!("positive log-probability at position {k}"));
        }
    }

    if let Some(att) = &rec.attention {
        if att.rows() != rec.mt_tokens.len() || att.cols() != rec.src_tokens.len() {
            report.push(
                "attention",
                format!(
                    "shape {}x{} does not match {} mt_tokens x {} src_tokens",
                    att.rows(),
                    att.cols(),
                    rec.mt_tokens.len(),
                    rec.src_tokens.len()
                ),
            );
        }
        for (i, row) in att.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|w| !(0.0..=1.0).contains(w)) {
                report.push(
                    "attention",
                    format!("attention weight at ({i}, {j}) is {}, outside [0, 1]", row[j]),
                );
            }
            let sum: f64 = row.iter().sum();
            if sum.is_nan() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                report.push(
                    "attention",
                    format!("attention row {i} sums to {sum}, expected 1±{ROW_SUM_TOLERANCE}"),
                );
            }
        }
    }

    if let Some(hyps) = &rec.mc_hypotheses {
        if hyps.is_empty() {
            report.push("mc_hypotheses", "present but empty".into());
        }
    }
    if let Some(scores) = &rec.external_scores {
        for (name, v) in scores {
            if !v.is_finite() {
                report.push("external_scores", format!("channel `{name}` is not finite"));
            }
        }
    }
    if let Some(labels) = &rec.token_hal_labels {
        if labels.len() != rec.mt_tokens.len() {
            report.push(
                "token_hal_labels",
                format!("length {} does not match {} mt_tokens", labels.len(), rec.mt_tokens.len()),
            );
        }
        if let Some(k) = labels.iter().position(|&l| l > 1) {
            report.push("token_hal_labels", format!("label at position {k} is not 0 or 1"));
        }
    }
    if let Some(a) = &rec.annotation {
        if a.correct && a.has_pathology() {
            report.push("annotation", "marked correct but carries pathology flags".into());
        }
        if a.sd && a.fd {
            report.push("annotation", "sd and fd are mutually exclusive".into());
        }
    }
    report
}
