//! Hallucination detection and mitigation for machine-translation output.
//!
//! The crate consumes signals exported from an NMT system (token
//! log-probabilities, cross-attention, Monte-Carlo dropout hypotheses and
//! externally computed quality scores) and provides:
//!
//! - [`record`]: the JSON Lines record model and its validation,
//! - [`text_metrics`]: n-gram utilities and sentence-level chrF,
//! - [`detectors`]: continuous scores and binary heuristics with a uniform
//!   "lower is more suspicious" orientation,
//! - [`calibration`]: nearest-rank percentile thresholds and flagging,
//! - [`analysis`]: category distributions, exclusive set intersections and
//!   Cohen's kappa,
//! - [`dehallucinator`]: detect-then-rerank overwriting of flagged
//!   translations.

pub mod analysis;
pub mod calibration;
pub mod dehallucinator;
pub mod detectors;
mod error;
pub mod record;
pub mod text_metrics;

pub use analysis::{Category, CorpusSummary, OverlapPattern};
pub use calibration::{CalibrationEntry, CalibrationTable, FlagMatrix, FlagState};
pub use dehallucinator::{
    Action, CandidateSignals, PipelineConfig, PipelineOutcome, PipelineReport, Scorer,
};
pub use detectors::{
    DetectorId, DetectorKind, DetectorParams, Direction, MissingSignal, RtIndex, ScoreVector,
};
pub use error::{Error, Result};
pub use record::{Annotation, AttentionMatrix, TranslationRecord, ValidationReport};
pub use text_metrics::{ChrfSimilarity, NGramMultiset, Similarity};
