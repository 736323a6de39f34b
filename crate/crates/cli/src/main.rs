//! `hallsentry`: batch hallucination detection for MT output.

mod commands;
mod formats;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{ArgAction, Parser, Subcommand};
use hallsentry::detectors::SimilaritySource;
use hallsentry::{DetectorId, Scorer};

#[derive(Parser)]
#[command(name = "hallsentry", version, about = "Detect and mitigate hallucinations in machine-translation output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Debug)]
pub struct DetectorArgs {
    /// n-gram order for TNG.
    #[arg(long, default_value_t = 4)]
    pub tng_n: usize,
    /// Minimum excess of the top n-gram count for TNG.
    #[arg(long, default_value_t = 2)]
    pub tng_t: usize,
    /// Distinct sources needed for a repeated target (RT).
    #[arg(long, default_value_t = 2)]
    pub rt_min: usize,
    /// Attention-mass threshold for Attn-ign-SRC.
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    /// Hypothesis similarity for MC-DSim.
    #[arg(long, value_enum, default_value = "chrf")]
    pub similarity: SimilarityArg,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum SimilarityArg {
    Chrf,
    Precomputed,
}

impl From<SimilarityArg> for SimilaritySource {
    fn from(s: SimilarityArg) -> Self {
        match s {
            SimilarityArg::Chrf => SimilaritySource::Chrf,
            SimilarityArg::Precomputed => SimilaritySource::Precomputed,
        }
    }
}

fn parse_detector(s: &str) -> Result<DetectorId, String> {
    s.parse::<DetectorId>().map_err(|e| e.to_string())
}

fn parse_scorer(s: &str) -> Result<Scorer, String> {
    s.parse::<Scorer>().map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus against the record schema and invariants.
    Validate {
        corpus: PathBuf,
        /// Also write the violation report as JSON Lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every record with the requested detectors.
    Score {
        corpus: PathBuf,
        /// Comma-separated detector names; all detectors when omitted.
        #[arg(long, value_delimiter = ',', value_parser = parse_detector)]
        detectors: Vec<DetectorId>,
        #[command(flatten)]
        params: DetectorArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Derive per-detector thresholds from a score file.
    Calibrate {
        scores: PathBuf,
        /// Fraction of the worst scores to flag.
        #[arg(long, default_value_t = hallsentry::calibration::DEFAULT_Q)]
        q: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Flag records using a calibration table.
    Flag {
        scores: PathBuf,
        calibration: PathBuf,
        /// Keep only flags inside the bottom quality set of this detector.
        #[arg(long, value_parser = parse_detector)]
        quality_channel: Option<DetectorId>,
        #[arg(long, default_value_t = hallsentry::calibration::DEFAULT_QUALITY_P)]
        quality_p: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Category distributions and exclusive intersections of flagged sets.
    Analyze {
        corpus: PathBuf,
        flags: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_k: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Overwrite flagged translations with the best-scoring candidate.
    Dehallucinate {
        corpus: PathBuf,
        calibration: PathBuf,
        candidates: PathBuf,
        #[arg(long, default_value = "seq-logprob", value_parser = parse_detector)]
        detector: DetectorId,
        /// Candidate scoring channel: seq-logprob or an external channel name.
        #[arg(long, default_value = "comet-qe", value_parser = parse_scorer)]
        scorer: Scorer,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        include_original: bool,
        /// Expected hypotheses per flagged record.
        #[arg(long, default_value_t = 10)]
        n_candidates: usize,
        #[command(flatten)]
        params: DetectorArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write a pipeline summary as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Print the detector catalog.
    Detectors,
}

/// Failure with an explicit process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

pub type CmdResult = Result<u8, Exit>;

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit::usage(format!("{e:#}"))
    }
}

impl From<hallsentry::Error> for Exit {
    fn from(e: hallsentry::Error) -> Self {
        Exit::usage(e.to_string())
    }
}

pub fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn init_threads() -> Result<(), Exit> {
    let Ok(v) = std::env::var("HALLSENTRY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Exit::usage(format!("HALLSENTRY_THREADS must be an integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Exit::usage(e.to_string()))
}

fn run(cli: Cli) -> CmdResult {
    init_threads()?;
    match cli.command {
        Command::Validate { corpus, out } => commands::validate(&corpus, out.as_deref()),
        Command::Score {
            corpus,
            detectors,
            params,
            out,
            manifest,
        } => commands::score(&corpus, &detectors, &params, &out, manifest.as_ref()),
        Command::Calibrate {
            scores,
            q,
            out,
            manifest,
        } => commands::calibrate(&scores, q, &out, manifest.as_ref()),
        Command::Flag {
            scores,
            calibration,
            quality_channel,
            quality_p,
            out,
            manifest,
        } => commands::flag(&scores, &calibration, quality_channel, quality_p, &out, manifest.as_ref()),
        Command::Analyze {
            corpus,
            flags,
            top_k,
            out,
            manifest,
        } => commands::analyze(&corpus, &flags, top_k, &out, manifest.as_ref()),
        Command::Dehallucinate {
            corpus,
            calibration,
            candidates,
            detector,
            scorer,
            include_original,
            n_candidates,
            params,
            out,
            report,
            manifest,
        } => commands::dehallucinate(commands::DehallucinateArgs {
            corpus: &corpus,
            calibration: &calibration,
            candidates: &candidates,
            detector,
            scorer,
            include_original,
            n_candidates,
            params: &params,
            out: &out,
            report: report.as_deref(),
            manifest: manifest.as_ref(),
        }),
        Command::Detectors => commands::catalog(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
