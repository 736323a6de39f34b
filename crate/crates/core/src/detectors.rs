//! Hallucination detectors.
//!
//! Continuous detectors produce a real score; binary heuristics produce 0 or 1.
//! Every continuous score can be mapped onto a common orientation where lower
//! values are more suspicious (see [`oriented_score`]), which is what the
//! calibration layer thresholds.
//!
//! A detector whose input signal is absent from a record yields
//! [`MissingSignal`] rather than a number.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::record::TranslationRecord;
use crate::text_metrics::{chrf2, top_repeated_count, ChrfSimilarity, Similarity};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorId {
    SeqLogprob,
    McDsim,
    AttnToEos,
    AttnIgnSrc,
    Tng,
    Rt,
    Chrf2,
    Comet,
    CometQe,
    Tokhal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Continuous,
    Binary,
}

/// Which end of a detector's native scale marks a suspicious translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerIsWorse,
    HigherIsWorse,
}

impl DetectorId {
    pub const ALL: [DetectorId; 10] = [
        DetectorId::SeqLogprob,
        DetectorId::McDsim,
        DetectorId::AttnToEos,
        DetectorId::AttnIgnSrc,
        DetectorId::Tng,
        DetectorId::Rt,
        DetectorId::Chrf2,
        DetectorId::Comet,
        DetectorId::CometQe,
        DetectorId::Tokhal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorId::SeqLogprob => "seq-logprob",
            DetectorId::McDsim => "mc-dsim",
            DetectorId::AttnToEos => "attn-to-eos",
            DetectorId::AttnIgnSrc => "attn-ign-src",
            DetectorId::Tng => "tng",
            DetectorId::Rt => "rt",
            DetectorId::Chrf2 => "chrf2",
            DetectorId::Comet => "comet",
            DetectorId::CometQe => "comet-qe",
            DetectorId::Tokhal => "tokhal",
        }
    }

    pub fn kind(self) -> DetectorKind {
        match self {
            DetectorId::Tng | DetectorId::Rt => DetectorKind::Binary,
            _ => DetectorKind::Continuous,
        }
    }

    pub fn is_binary(self) -> bool {
        self.kind() == DetectorKind::Binary
    }

    /// Native direction. Binary heuristics flag with 1, so they count as
    /// higher-is-worse.
    pub fn direction(self) -> Direction {
        match self {
            DetectorId::SeqLogprob
            | DetectorId::McDsim
            | DetectorId::Chrf2
            | DetectorId::Comet
            | DetectorId::CometQe => Direction::LowerIsWorse,
            DetectorId::AttnToEos
            | DetectorId::AttnIgnSrc
            | DetectorId::Tokhal
            | DetectorId::Tng
            | DetectorId::Rt => Direction::HigherIsWorse,
        }
    }

    /// Record fields the detector reads.
    pub fn required_signals(self) -> &'static str {
        match self {
            DetectorId::SeqLogprob => "token_logprobs",
            DetectorId::McDsim => "mc_hypotheses",
            DetectorId::AttnToEos | DetectorId::AttnIgnSrc => "attention",
            DetectorId::Tng => "src, mt",
            DetectorId::Rt => "src, mt (whole corpus)",
            DetectorId::Chrf2 => "ref",
            DetectorId::Comet => "external_scores.comet",
            DetectorId::CometQe => "external_scores.comet-qe",
            DetectorId::Tokhal => "token_hal_labels",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::argument(format!(
                    "unknown detector `{s}`; valid detectors: {}",
                    Self::valid_names()
                ))
            })
    }
}

/// A detector could not run because the record lacks its input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record lacks `{signal}` required by `{detector}`")]
pub struct MissingSignal {
    pub detector: String,
    pub signal: &'static str,
}

impl MissingSignal {
    fn new(detector: impl Into<String>, signal: &'static str) -> Self {
        Self {
            detector: detector.into(),
            signal,
        }
    }
}

type Signal<T> = std::result::Result<T, MissingSignal>;

/// Length-normalised sequence log-probability: the mean token log-probability.
pub fn seq_logprob(rec: &TranslationRecord) -> Signal<f64> {
    let lp = &rec.token_logprobs;
    if lp.is_empty() {
        return Err(MissingSignal::new("seq-logprob", "token_logprobs"));
    }
    Ok(lp.iter().sum::<f64>() / lp.len() as f64)
}

/// Mean similarity between each Monte-Carlo hypothesis and the translation.
pub fn mc_dsim(rec: &TranslationRecord, sim: &dyn Similarity) -> Signal<f64> {
    let hyps = match &rec.mc_hypotheses {
        Some(h) if !h.is_empty() => h,
        _ => return Err(MissingSignal::new("mc-dsim", "mc_hypotheses")),
    };
    let total: f64 = hyps.iter().map(|h| sim.similarity(h, &rec.mt)).sum();
    Ok(total / hyps.len() as f64)
}

/// External channel holding a precomputed similarity for hypothesis `i`.
pub fn mc_similarity_channel(i: usize) -> String {
    format!("mc-sim:{i}")
}

/// MC-DSim from per-hypothesis similarities supplied in `external_scores`
/// under `mc-sim:0`, `mc-sim:1`, ... (one per entry of `mc_hypotheses`).
pub fn mc_dsim_precomputed(rec: &TranslationRecord) -> Signal<f64> {
    let n = match &rec.mc_hypotheses {
        Some(h) if !h.is_empty() => h.len(),
        _ => return Err(MissingSignal::new("mc-dsim", "mc_hypotheses")),
    };
    let mut total = 0.0;
    for i in 0..n {
        total += rec
            .external(&mc_similarity_channel(i))
            .ok_or_else(|| MissingSignal::new("mc-dsim", "external_scores.mc-sim:<i>"))?;
    }
    Ok(total / n as f64)
}

/// Mean attention mass placed on the source EOS column (the last column).
pub fn attn_to_eos(rec: &TranslationRecord) -> Signal<f64> {
    let att = match &rec.attention {
        Some(a) if a.rows() > 0 && a.cols() > 0 => a,
        _ => return Err(MissingSignal::new("attn-to-eos", "attention")),
    };
    Ok(att.column_sum(att.cols() - 1) / att.rows() as f64)
}

/// Fraction of source positions (EOS included) whose total incoming
/// attention mass over all target rows is below `tau`.
pub fn attn_ign_src(rec: &TranslationRecord, tau: f64) -> Signal<f64> {
    let att = match &rec.attention {
        Some(a) if a.cols() > 0 => a,
        _ => return Err(MissingSignal::new("attn-ign-src", "attention")),
    };
    let mut sums = vec![0.0; att.cols()];
    for row in att.iter_rows() {
        for (s, w) in sums.iter_mut().zip(row) {
            *s += w;
        }
    }
    let ignored = sums.iter().filter(|&&s| s < tau).count();
    Ok(ignored as f64 / att.cols() as f64)
}

/// Lowercased whitespace-separated words.
pub fn word_units(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// 1 when the translation's top repeated n-gram count exceeds the source's by
/// at least `t`.
pub fn tng_flag(rec: &TranslationRecord, n: usize, t: usize) -> Result<bool> {
    let mt = top_repeated_count(&word_units(&rec.mt), n)?;
    let src = top_repeated_count(&word_units(&rec.src), n)?;
    Ok(mt >= src + t)
}

/// Key under which repeated targets are grouped: lowercase with whitespace
/// runs collapsed to single spaces. Punctuation is kept.
pub fn normalize_target(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalised translation -> distinct source sentences that produced it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RtIndex {
    sources: HashMap<String, BTreeSet<String>>,
}

impl RtIndex {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a TranslationRecord>) -> Self {
        let mut sources: HashMap<String, BTreeSet<String>> = HashMap::new();
        for rec in corpus {
            sources
                .entry(normalize_target(&rec.mt))
                .or_default()
                .insert(rec.src.clone());
        }
        Self { sources }
    }

    pub fn sources_for(&self, mt: &str) -> Option<&BTreeSet<String>> {
        self.sources.get(&normalize_target(mt))
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.sources.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// 1 when the record's translation was produced for at least `min_sources`
/// distinct sources.
pub fn rt_flag(rec: &TranslationRecord, index: &RtIndex, min_sources: usize) -> Result<bool> {
    let srcs = index.sources_for(&rec.mt).ok_or_else(|| {
        Error::argument(format!(
            "translation of record `{}` is not in the repeated-target index",
            rec.id
        ))
    })?;
    Ok(srcs.len() >= min_sources)
}

/// Reads a quality channel. `chrf2` is computed from the reference; other
/// channels are passed through from `external_scores`.
pub fn external_score(rec: &TranslationRecord, channel: &str) -> Signal<f64> {
    if channel == DetectorId::Chrf2.name() {
        let reference = rec
            .reference
            .as_deref()
            .ok_or_else(|| MissingSignal::new(channel, "ref"))?;
        return Ok(chrf2(&rec.mt, reference));
    }
    rec.external(channel)
        .ok_or_else(|| MissingSignal::new(channel, "external_scores"))
}

/// Share of target tokens labelled as hallucinated by an external token tagger.
pub fn tokhal_proportion(rec: &TranslationRecord) -> Signal<f64> {
    match &rec.token_hal_labels {
        Some(l) if !l.is_empty() => {
            Ok(l.iter().map(|&x| x as f64).sum::<f64>() / l.len() as f64)
        }
        _ => Err(MissingSignal::new("tokhal", "token_hal_labels")),
    }
}

/// Maps a continuous raw score onto the lower-is-more-suspicious scale.
pub fn oriented_score(detector: DetectorId, raw: f64) -> Result<f64> {
    if detector.is_binary() {
        return Err(Error::argument(format!(
            "`{detector}` is binary and has no oriented score"
        )));
    }
    Ok(match detector.direction() {
        Direction::LowerIsWorse => raw,
        Direction::HigherIsWorse => -raw,
    })
}

/// How MC-DSim obtains hypothesis similarities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilaritySource {
    /// Built-in chrF2 / 100.
    #[default]
    Chrf,
    /// Per-hypothesis values from `mc-sim:<i>` external channels.
    Precomputed,
}

/// Tunable detector parameters. Defaults match the CLI defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub tng_n: usize,
    pub tng_t: usize,
    pub rt_min: usize,
    pub tau: f64,
    pub similarity: SimilaritySource,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            tng_n: 4,
            tng_t: 2,
            rt_min: 2,
            tau: 0.2,
            similarity: SimilaritySource::Chrf,
        }
    }
}

/// Computes one detector's raw score; binary detectors yield 0.0 or 1.0.
pub fn raw_score(
    rec: &TranslationRecord,
    detector: DetectorId,
    params: &DetectorParams,
    rt_index: Option<&RtIndex>,
) -> Result<Signal<f64>> {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(match detector {
        DetectorId::SeqLogprob => seq_logprob(rec),
        DetectorId::McDsim => match params.similarity {
            SimilaritySource::Chrf => mc_dsim(rec, &ChrfSimilarity),
            SimilaritySource::Precomputed => mc_dsim_precomputed(rec),
        },
        DetectorId::AttnToEos => attn_to_eos(rec),
        DetectorId::AttnIgnSrc => attn_ign_src(rec, params.tau),
        DetectorId::Tng => Ok(bit(tng_flag(rec, params.tng_n, params.tng_t)?)),
        DetectorId::Rt => {
            let index = rt_index
                .ok_or_else(|| Error::argument("rt requires a repeated-target index"))?;
            Ok(bit(rt_flag(rec, index, params.rt_min)?))
        }
        DetectorId::Chrf2 | DetectorId::Comet | DetectorId::CometQe => {
            external_score(rec, detector.name())
        }
        DetectorId::Tokhal => tokhal_proportion(rec),
    })
}

/// Raw detector outputs for one record. Detectors whose signal was missing
/// appear in `missing` and never in `raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub id: String,
    pub raw: BTreeMap<DetectorId, f64>,
    pub missing: BTreeSet<DetectorId>,
}

impl ScoreVector {
    pub fn oriented(&self, detector: DetectorId) -> Option<f64> {
        let raw = *self.raw.get(&detector)?;
        oriented_score(detector, raw).ok()
    }
}

pub fn score_record(
    rec: &TranslationRecord,
    detectors: &[DetectorId],
    params: &DetectorParams,
    rt_index: Option<&RtIndex>,
) -> Result<ScoreVector> {
    let mut raw = BTreeMap::new();
    let mut missing = BTreeSet::new();
    for &d in detectors {
        match raw_score(rec, d, params, rt_index)? {
            Ok(v) => {
                raw.insert(d, v);
            }
            Err(_) => {
                missing.insert(d);
            }
        }
    }
    Ok(ScoreVector {
        id: rec.id.clone(),
        raw,
        missing,
    })
}

/// Scores a corpus in parallel. The repeated-target index, when needed, is
/// built first and shared read-only. Output order follows input order.
pub fn score_corpus(
    corpus: &[TranslationRecord],
    detectors: &[DetectorId],
    params: &DetectorParams,
) -> Result<Vec<ScoreVector>> {
    let index = detectors
        .contains(&DetectorId::Rt)
        .then(|| RtIndex::build(corpus));
    corpus
        .par_iter()
        .map(|rec| score_record(rec, detectors, params, index.as_ref()))
        .collect()
}
