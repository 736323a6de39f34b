//! Detect-then-rerank overwriting of flagged translations.
//!
//! A record is scored by one detector. When flagged, its Monte-Carlo
//! hypotheses (optionally together with the original translation) are scored
//! with a candidate scorer and the highest-scoring one replaces the
//! translation. Ties go to the lowest pool index; the original, when it
//! competes, sits at index 0.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{flag, CalibrationTable};
use crate::detectors::{oriented_score, raw_score, seq_logprob, DetectorId, DetectorParams};
use crate::error::{Error, Result};
use crate::record::{Annotation, TranslationRecord};

/// Channel used to rank candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scorer {
    /// Length-normalised log-probability under the original model.
    SeqLogprob,
    /// A precomputed external channel such as `comet-qe`.
    External(String),
}

impl Scorer {
    pub fn comet_qe() -> Self {
        Scorer::External("comet-qe".into())
    }

    pub fn name(&self) -> &str {
        match self {
            Scorer::SeqLogprob => "seq-logprob",
            Scorer::External(c) => c,
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::argument("empty scorer name")),
            "seq-logprob" => Ok(Scorer::SeqLogprob),
            other => Ok(Scorer::External(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorId,
    /// Threshold on the detector's oriented score; unused for binary detectors.
    pub gamma: Option<f64>,
    pub params: DetectorParams,
    pub scorer: Scorer,
    pub include_original: bool,
    /// Expected number of MC hypotheses per flagged record.
    pub n_candidates: usize,
}

impl PipelineConfig {
    /// Seq-Logprob detection with COMET-QE reranking, original included.
    pub fn new(table: &CalibrationTable) -> Result<Self> {
        Self::with_detector(DetectorId::SeqLogprob, table, Scorer::comet_qe())
    }

    pub fn with_detector(detector: DetectorId, table: &CalibrationTable, scorer: Scorer) -> Result<Self> {
        if detector == DetectorId::Rt {
            return Err(Error::argument("rt needs a corpus index and cannot drive the per-record pipeline"));
        }
        let gamma = if detector.is_binary() {
            None
        } else {
            Some(table.gamma(detector).ok_or_else(|| {
                Error::argument(format!("no calibrated threshold for `{detector}`"))
            })?)
        };
        Ok(Self {
            detector,
            gamma,
            params: DetectorParams::default(),
            scorer,
            include_original: true,
            n_candidates: 10,
        })
    }

    /// Whether the detector flags this record.
    pub fn is_flagged(&self, rec: &TranslationRecord) -> Result<bool> {
        let raw = raw_score(rec, self.detector, &self.params, None)??;
        if self.detector.is_binary() {
            return Ok(raw >= 0.5);
        }
        let gamma = self
            .gamma
            .ok_or_else(|| Error::argument(format!("no threshold for `{}`", self.detector)))?;
        Ok(flag(oriented_score(self.detector, raw)?, gamma))
    }
}

/// One alternative translation with its scorer inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
}

impl Candidate {
    fn score(&self, scorer: &Scorer) -> Option<f64> {
        match scorer {
            Scorer::SeqLogprob => self.seq_logprob,
            Scorer::External(c) => self.external_scores.as_ref()?.get(c).copied(),
        }
    }
}

/// Sidecar entry: the candidates generated for one flagged record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSignals {
    pub id: String,
    pub candidates: Vec<Candidate>,
}

/// Parses a JSON Lines candidate sidecar into a map keyed by record id.
pub fn parse_candidates(text: &str) -> Result<HashMap<String, CandidateSignals>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CandidateSignals = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.contains_key(&entry.id) {
            return Err(Error::Schema {
                line: i + 1,
                field: "id".into(),
                message: format!("duplicate candidate entry for `{}`", entry.id),
            });
        }
        out.insert(entry.id.clone(), entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    PassedThrough,
    Overwritten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub id: String,
    pub action: Action,
    #[serde(rename = "final")]
    pub final_text: String,
    /// Index into the candidate pool; `None` when passed through.
    pub chosen_index: Option<usize>,
    /// Scorer value of every pool member, in pool order.
    pub scores: Vec<f64>,
}

/// Runs detection and, when flagged, reranking for one record.
///
/// Hypotheses come from the sidecar entry when given, otherwise from the
/// record's `mc_hypotheses`.
pub fn dehallucinate(
    rec: &TranslationRecord,
    candidates: Option<&CandidateSignals>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    if !cfg.is_flagged(rec)? {
        return Ok(PipelineOutcome {
            id: rec.id.clone(),
            action: Action::PassedThrough,
            final_text: rec.mt.clone(),
            chosen_index: None,
            scores: Vec::new(),
        });
    }

    let hypotheses: Vec<(String, Option<f64>)> = match (candidates, &rec.mc_hypotheses) {
        (Some(c), _) if !c.candidates.is_empty() => c
            .candidates
            .iter()
            .map(|c| (c.text.clone(), c.score(&cfg.scorer)))
            .collect(),
        (_, Some(h)) if !h.is_empty() => h.iter().map(|t| (t.clone(), None)).collect(),
        _ => return Err(Error::NoCandidates(rec.id.clone())),
    };

    let mut pool: Vec<(String, Option<f64>)> = Vec::with_capacity(hypotheses.len() + 1);
    if cfg.include_original {
        let own = match &cfg.scorer {
            Scorer::SeqLogprob => seq_logprob(rec).ok(),
            Scorer::External(c) => rec.external(c),
        };
        pool.push((rec.mt.clone(), own));
    }
    pool.extend(hypotheses);

    let mut scores = Vec::with_capacity(pool.len());
    for (index, (_, s)) in pool.iter().enumerate() {
        match s {
            Some(v) if v.is_finite() => scores.push(*v),
            _ => {
                return Err(Error::CandidateScore {
                    id: rec.id.clone(),
                    scorer: cfg.scorer.to_string(),
                    index,
                })
            }
        }
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(PipelineOutcome {
        id: rec.id.clone(),
        action: Action::Overwritten,
        final_text: pool.swap_remove(best).0,
        chosen_index: Some(best),
        scores,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    pub total: usize,
    pub passed_through: usize,
    pub overwritten: usize,
    pub overwrite_rate: Option<f64>,
    /// Overwritten records with an annotation of the original translation.
    pub annotated_before: usize,
    /// Overwritten records with an annotation of the final translation.
    pub annotated_after: usize,
    pub correct_rate_before: Option<f64>,
    pub correct_rate_after: Option<f64>,
    pub hallucination_rate_before: Option<f64>,
    pub hallucination_rate_after: Option<f64>,
    /// `hallucination_rate_before / hallucination_rate_after`.
    pub hallucination_reduction: Option<f64>,
}

/// Summarises outcomes. Before/after rates are computed over overwritten
/// records, using annotations of the original (`before`) and final (`after`)
/// translations keyed by record id.
pub fn pipeline_report(
    outcomes: &[PipelineOutcome],
    before: Option<&HashMap<String, Annotation>>,
    after: Option<&HashMap<String, Annotation>>,
) -> PipelineReport {
    let overwritten: Vec<&PipelineOutcome> = outcomes
        .iter()
        .filter(|o| o.action == Action::Overwritten)
        .collect();
    let mut report = PipelineReport {
        total: outcomes.len(),
        overwritten: overwritten.len(),
        passed_through: outcomes.len() - overwritten.len(),
        overwrite_rate: (!outcomes.is_empty())
            .then(|| overwritten.len() as f64 / outcomes.len() as f64),
        ..Default::default()
    };
    let rates = |ann: &HashMap<String, Annotation>| {
        let labelled: Vec<&Annotation> = overwritten.iter().filter_map(|o| ann.get(&o.id)).collect();
        let n = labelled.len();
        let correct = labelled.iter().filter(|a| a.correct).count();
        let hall = labelled.iter().filter(|a| a.is_hallucination()).count();
        let ratio = |k: usize| (n > 0).then(|| k as f64 / n as f64);
        (n, ratio(correct), ratio(hall))
    };
    if let Some(b) = before {
        (report.annotated_before, report.correct_rate_before, report.hallucination_rate_before) = rates(b);
    }
    if let Some(a) = after {
        (report.annotated_after, report.correct_rate_after, report.hallucination_rate_after) = rates(a);
    }
    if let (Some(b), Some(a)) = (report.hallucination_rate_before, report.hallucination_rate_after) {
        report.hallucination_reduction = (a > 0.0).then(|| b / a);
    }
    report
}
