//! On-disk formats written and read by the commands.
//!
//! Scores: JSON Lines, one object per record in corpus order:
//! `{"id", "scores": {detector: {"raw", "oriented"?}}, "missing": [detector]}`.
//! Binary detectors carry an integer `raw` of 0 or 1 and no `oriented` value.
//!
//! Flags: JSON Lines, `{"id", "flags": {detector: "flagged" | "not-flagged" |
//! "missing-signal"}}`.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use hallsentry::calibration::FlagRow;
use hallsentry::detectors::oriented_score;
use hallsentry::{DetectorId, FlagMatrix, ScoreVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Serialize, Deserialize)]
struct ScoreCell {
    raw: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oriented: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreLine {
    id: String,
    scores: BTreeMap<DetectorId, ScoreCell>,
    missing: BTreeSet<DetectorId>,
}

pub fn write_scores(scores: &[ScoreVector]) -> Result<String> {
    let mut out = String::new();
    for sv in scores {
        let mut cells = BTreeMap::new();
        for (&d, &raw) in &sv.raw {
            let cell = if d.is_binary() {
                ScoreCell {
                    raw: Value::from(u8::from(raw >= 0.5)),
                    oriented: None,
                }
            } else {
                ScoreCell {
                    raw: Value::from(raw),
                    oriented: Some(oriented_score(d, raw)?),
                }
            };
            cells.insert(d, cell);
        }
        let line = ScoreLine {
            id: sv.id.clone(),
            scores: cells,
            missing: sv.missing.clone(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_scores(text: &str) -> Result<Vec<ScoreVector>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScoreLine =
            serde_json::from_str(line).with_context(|| format!("score file line {}", i + 1))?;
        let mut raw = BTreeMap::new();
        for (d, cell) in parsed.scores {
            let Some(v) = cell.raw.as_f64() else {
                bail!("score file line {}: `{d}` raw value is not a number", i + 1);
            };
            raw.insert(d, v);
        }
        out.push(ScoreVector {
            id: parsed.id,
            raw,
            missing: parsed.missing,
        });
    }
    Ok(out)
}

pub fn write_flags(m: &FlagMatrix) -> Result<String> {
    let mut out = String::new();
    for row in &m.rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_flags(text: &str) -> Result<FlagMatrix> {
    let mut rows = Vec::new();
    let mut detectors = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: FlagRow =
            serde_json::from_str(line).with_context(|| format!("flag file line {}", i + 1))?;
        detectors.extend(row.flags.keys().copied());
        rows.push(row);
    }
    Ok(FlagMatrix {
        detectors: detectors.into_iter().collect(),
        rows,
    })
}
