//! Percentile thresholds and the flagging rule.
//!
//! Thresholds are nearest-rank quantiles of oriented scores on a clean
//! calibration corpus. A translation is flagged when its oriented score is at
//! or below the threshold, so every score tied with the threshold is flagged.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::detectors::{oriented_score, DetectorId, MissingSignal, ScoreVector};
use crate::error::{Error, Result};
use crate::record::TranslationRecord;
use crate::text_metrics::chrf2;

/// Default calibration percentile (0.4% of the worst scores).
pub const DEFAULT_Q: f64 = 0.004;
/// Default bottom-quality fraction for the quality-filter intersection.
pub const DEFAULT_QUALITY_P: f64 = 0.01;

/// 1-based nearest rank `ceil(q * n)`, never below 1.
///
/// The product is nudged down by a few ulps' worth before rounding up so that
/// values like `0.004 * 1000` land on 4 rather than 5.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let x = q * n as f64;
    let k = (x - x.abs() * 1e-12).ceil() as usize;
    k.clamp(1, n.max(1))
}

fn check_fraction(name: &str, q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("{name} must lie in (0, 1), got {q}")))
    }
}

/// The k-th smallest score with `k = ceil(q * n)`.
pub fn calibrate_threshold(scores: &[f64], q: f64) -> Result<f64> {
    check_fraction("q", q)?;
    if scores.is_empty() {
        return Err(Error::argument("cannot calibrate on an empty score set"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::argument("scores contain NaN"));
    }
    let k = nearest_rank(q, scores.len());
    let mut buf = scores.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Decision rule on oriented scores: flagged iff `score <= gamma`.
pub fn flag(score: f64, gamma: f64) -> bool {
    score <= gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub gamma: f64,
    pub q: f64,
    pub n_calib: usize,
}

/// Per-detector thresholds, persisted as `{detector: {gamma, q, n_calib}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalibrationTable {
    pub entries: BTreeMap<DetectorId, CalibrationEntry>,
}

impl CalibrationTable {
    /// Calibrates every continuous detector that has at least one score.
    pub fn from_scores(scores: &[ScoreVector], q: f64) -> Result<Self> {
        check_fraction("q", q)?;
        let mut columns: BTreeMap<DetectorId, Vec<f64>> = BTreeMap::new();
        for sv in scores {
            for (&d, &raw) in &sv.raw {
                if !d.is_binary() {
                    columns.entry(d).or_default().push(oriented_score(d, raw)?);
                }
            }
        }
        let mut entries = BTreeMap::new();
        for (d, col) in columns {
            entries.insert(
                d,
                CalibrationEntry {
                    gamma: calibrate_threshold(&col, q)?,
                    q,
                    n_calib: col.len(),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn get(&self, d: DetectorId) -> Option<&CalibrationEntry> {
        self.entries.get(&d)
    }

    pub fn gamma(&self, d: DetectorId) -> Option<f64> {
        self.get(d).map(|e| e.gamma)
    }

    /// Rejects entries for binary detectors and out-of-range fields.
    pub fn check(&self) -> Result<()> {
        for (d, e) in &self.entries {
            if d.is_binary() {
                return Err(Error::argument(format!("calibration entry for binary detector `{d}`")));
            }
            check_fraction("q", e.q)?;
            if e.n_calib == 0 || !e.gamma.is_finite() {
                return Err(Error::argument(format!("invalid calibration entry for `{d}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagState {
    Flagged,
    NotFlagged,
    MissingSignal,
}

impl FlagState {
    pub fn is_flagged(self) -> bool {
        self == FlagState::Flagged
    }

    fn from_bool(b: bool) -> Self {
        if b {
            FlagState::Flagged
        } else {
            FlagState::NotFlagged
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub id: String,
    pub flags: BTreeMap<DetectorId, FlagState>,
}

/// Per-record, per-detector flag states. Rows keep corpus order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagMatrix {
    pub detectors: Vec<DetectorId>,
    pub rows: Vec<FlagRow>,
}

impl FlagMatrix {
    /// Applies the calibrated thresholds to continuous detectors and maps
    /// binary detectors 1 -> flagged, 0 -> not flagged. Continuous detectors
    /// without a calibration entry are left out.
    pub fn from_scores(scores: &[ScoreVector], table: &CalibrationTable) -> Result<Self> {
        let seen: BTreeSet<DetectorId> = scores
            .iter()
            .flat_map(|sv| sv.raw.keys().chain(sv.missing.iter()).copied())
            .collect();
        let detectors: Vec<DetectorId> = seen
            .into_iter()
            .filter(|d| d.is_binary() || table.get(*d).is_some())
            .collect();
        let mut rows = Vec::with_capacity(scores.len());
        for sv in scores {
            let mut flags = BTreeMap::new();
            for &d in &detectors {
                let state = match sv.raw.get(&d) {
                    None => FlagState::MissingSignal,
                    Some(&raw) if d.is_binary() => FlagState::from_bool(raw >= 0.5),
                    Some(&raw) => {
                        let gamma = table.gamma(d).expect("filtered to calibrated detectors");
                        FlagState::from_bool(flag(oriented_score(d, raw)?, gamma))
                    }
                };
                flags.insert(d, state);
            }
            rows.push(FlagRow {
                id: sv.id.clone(),
                flags,
            });
        }
        Ok(Self { detectors, rows })
    }

    pub fn column(&self, d: DetectorId) -> Vec<(String, FlagState)> {
        self.rows
            .iter()
            .map(|r| {
                let s = r.flags.get(&d).copied().unwrap_or(FlagState::MissingSignal);
                (r.id.clone(), s)
            })
            .collect()
    }

    /// Ids flagged by `d`.
    pub fn flagged_ids(&self, d: DetectorId) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|r| r.flags.get(&d).is_some_and(|s| s.is_flagged()))
            .map(|r| r.id.clone())
            .collect()
    }

    /// Restricts every column to records in the bottom-`p` quality set.
    /// Returns how many flags were dropped because the quality score was
    /// missing.
    pub fn intersect_with_quality(&mut self, quality: &HashMap<String, f64>, p: f64) -> Result<usize> {
        let mut dropped = 0;
        for d in self.detectors.clone() {
            let out = intersect_with_quality(&self.column(d), quality, p)?;
            dropped += out.dropped_missing_quality;
            for (row, (_, state)) in self.rows.iter_mut().zip(out.flags) {
                row.flags.insert(d, state);
            }
        }
        Ok(dropped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityIntersection {
    pub flags: Vec<(String, FlagState)>,
    /// Flagged records removed because they had no quality score.
    pub dropped_missing_quality: usize,
}

/// Keeps a flag only when the record is among the bottom-`p` (nearest-rank)
/// records of the quality channel. `quality` holds oriented quality scores for
/// the whole corpus.
pub fn intersect_with_quality(
    flags: &[(String, FlagState)],
    quality: &HashMap<String, f64>,
    p: f64,
) -> Result<QualityIntersection> {
    check_fraction("p", p)?;
    let values: Vec<f64> = quality.values().copied().collect();
    let cutoff = if values.is_empty() {
        None
    } else {
        Some(calibrate_threshold(&values, p)?)
    };
    let mut dropped = 0;
    let out = flags
        .iter()
        .map(|(id, state)| {
            let state = match state {
                FlagState::Flagged => match (quality.get(id), cutoff) {
                    (Some(&qv), Some(c)) => FlagState::from_bool(flag(qv, c)),
                    _ => {
                        dropped += 1;
                        FlagState::NotFlagged
                    }
                },
                other => *other,
            };
            (id.clone(), state)
        })
        .collect();
    Ok(QualityIntersection {
        flags: out,
        dropped_missing_quality: dropped,
    })
}

/// True when sentence chrF2 against the reference is below 1 (on 0..=100).
pub fn chrf_below_one(rec: &TranslationRecord) -> std::result::Result<bool, MissingSignal> {
    let reference = rec.reference.as_deref().ok_or(MissingSignal {
        detector: "chrf2".into(),
        signal: "ref",
    })?;
    Ok(chrf2(&rec.mt, reference) < 1.0)
}
