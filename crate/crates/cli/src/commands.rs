use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use hallsentry::analysis::{
    corpus_summary, exclusive_intersections, method_category_distribution, Category,
};
use hallsentry::calibration::FlagState;
use hallsentry::dehallucinator::{dehallucinate as run_pipeline, parse_candidates, pipeline_report};
use hallsentry::detectors::{score_corpus, DetectorParams};
use hallsentry::record::{parse_corpus, parse_lines, validate_record};
use hallsentry::{
    Annotation, CalibrationTable, DetectorId, FlagMatrix, PipelineConfig, Scorer, TranslationRecord,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::formats::{read_flags, read_scores, write_flags, write_scores};
use crate::manifest::{default_path, ManifestBuilder};
use crate::{read_file, CmdResult, DetectorArgs, Exit};

impl DetectorArgs {
    fn to_params(&self) -> DetectorParams {
        DetectorParams {
            tng_n: self.tng_n,
            tng_t: self.tng_t,
            rt_min: self.rt_min,
            tau: self.tau,
            similarity: self.similarity.into(),
        }
    }
}

fn load_corpus(path: &Path) -> Result<Vec<TranslationRecord>, Exit> {
    let text = read_file(path)?;
    parse_corpus(&text).map_err(|e| Exit::usage(format!("{}: {e}", path.display())))
}

fn load_calibration(path: &Path) -> Result<CalibrationTable, Exit> {
    let table: CalibrationTable = serde_json::from_str(&read_file(path)?)
        .with_context(|| format!("cannot parse calibration table {}", path.display()))?;
    table.check()?;
    Ok(table)
}

#[derive(Serialize)]
struct ViolationLine<'a> {
    line: usize,
    id: Option<&'a str>,
    field: &'a str,
    message: String,
}

pub fn validate(corpus: &Path, out: Option<&Path>) -> CmdResult {
    let text = read_file(corpus)?;
    let mut entries: Vec<(usize, Option<String>, String, String)> = Vec::new();
    let mut seen = HashSet::new();
    let mut records = 0;
    for (lineno, parsed) in parse_lines(&text) {
        records += 1;
        match parsed {
            Err(hallsentry::Error::Schema { field, message, .. }) => {
                entries.push((lineno, None, field, message))
            }
            Err(e) => entries.push((lineno, None, "record".into(), e.to_string())),
            Ok(rec) => {
                if !seen.insert(rec.id.clone()) {
                    entries.push((lineno, Some(rec.id.clone()), "id".into(), format!("duplicate id `{}`", rec.id)));
                }
                for v in validate_record(&rec).violations {
                    entries.push((lineno, Some(rec.id.clone()), v.field.to_string(), v.message));
                }
            }
        }
    }

    let mut report = String::new();
    for (line, id, field, message) in &entries {
        println!("line {line} [{}] {field}: {message}", id.as_deref().unwrap_or("-"));
        let l = ViolationLine {
            line: *line,
            id: id.as_deref(),
            field,
            message: message.clone(),
        };
        report.push_str(&serde_json::to_string(&l).map_err(anyhow::Error::from)?);
        report.push('\n');
    }
    eprintln!("{records} records, {} violations", entries.len());
    if let Some(out) = out {
        let mut m = ManifestBuilder::new("validate", &[corpus], json!({}));
        m.records(records);
        m.note("violations", entries.len());
        m.write_output(out, report.as_bytes())?;
        m.finish(&default_path(out, None))?;
    }
    Ok(if entries.is_empty() { 0 } else { 1 })
}

pub fn score(
    corpus: &Path,
    detectors: &[DetectorId],
    args: &DetectorArgs,
    out: &Path,
    manifest: Option<&PathBuf>,
) -> CmdResult {
    let records = load_corpus(corpus)?;
    let detectors: Vec<DetectorId> = if detectors.is_empty() {
        DetectorId::ALL.to_vec()
    } else {
        let set: BTreeSet<DetectorId> = detectors.iter().copied().collect();
        set.into_iter().collect()
    };
    let params = args.to_params();
    let scores = score_corpus(&records, &detectors, &params)?;
    let mut m = ManifestBuilder::new(
        "score",
        &[corpus],
        json!({ "detectors": detectors, "params": params }),
    );
    m.records(records.len());
    m.write_output(out, write_scores(&scores)?.as_bytes())?;
    m.finish(&default_path(out, manifest))?;
    Ok(0)
}

pub fn calibrate(scores_path: &Path, q: f64, out: &Path, manifest: Option<&PathBuf>) -> CmdResult {
    let scores = read_scores(&read_file(scores_path)?)?;
    let table = CalibrationTable::from_scores(&scores, q)?;
    let mut text = serde_json::to_string_pretty(&table).map_err(anyhow::Error::from)?;
    text.push('\n');
    let mut m = ManifestBuilder::new("calibrate", &[scores_path], json!({ "q": q }));
    m.records(scores.len());
    m.write_output(out, text.as_bytes())?;
    m.finish(&default_path(out, manifest))?;
    Ok(0)
}

pub fn flag(
    scores_path: &Path,
    calibration: &Path,
    quality_channel: Option<DetectorId>,
    quality_p: f64,
    out: &Path,
    manifest: Option<&PathBuf>,
) -> CmdResult {
    let scores = read_scores(&read_file(scores_path)?)?;
    let table = load_calibration(calibration)?;
    let mut matrix = FlagMatrix::from_scores(&scores, &table)?;
    let mut m = ManifestBuilder::new(
        "flag",
        &[scores_path, calibration],
        json!({ "quality_channel": quality_channel, "quality_p": quality_p }),
    );
    if let Some(channel) = quality_channel {
        if channel.is_binary() {
            return Err(Exit::usage(format!("quality channel `{channel}` must be a continuous detector")));
        }
        let quality: HashMap<String, f64> = scores
            .iter()
            .filter_map(|sv| Some((sv.id.clone(), sv.oriented(channel)?)))
            .collect();
        let dropped = matrix.intersect_with_quality(&quality, quality_p)?;
        if dropped > 0 {
            eprintln!("warning: {dropped} flags dropped for lack of a `{channel}` score");
        }
        m.note("flags_dropped_missing_quality", dropped);
    }
    m.records(matrix.rows.len());
    m.write_output(out, write_flags(&matrix)?.as_bytes())?;
    m.finish(&default_path(out, manifest))?;
    Ok(0)
}

fn csv_value(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

pub fn analyze(
    corpus_path: &Path,
    flags_path: &Path,
    top_k: usize,
    out: &Path,
    manifest: Option<&PathBuf>,
) -> CmdResult {
    if top_k < 1 {
        return Err(Exit::usage("--top-k must be at least 1"));
    }
    let corpus = load_corpus(corpus_path)?;
    let matrix = read_flags(&read_file(flags_path)?)?;
    let known: HashSet<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
    let unknown = matrix.rows.iter().filter(|r| !known.contains(r.id.as_str())).count();

    let flag_sets: Vec<(String, BTreeSet<String>)> = matrix
        .detectors
        .iter()
        .map(|&d| (d.name().to_string(), matrix.flagged_ids(d)))
        .collect();

    let methods: Vec<_> = matrix
        .detectors
        .iter()
        .map(|&d| {
            let col = matrix.column(d);
            let count = |s: FlagState| col.iter().filter(|(_, x)| *x == s).count();
            json!({
                "method": d,
                "flagged": count(FlagState::Flagged),
                "not_flagged": count(FlagState::NotFlagged),
                "missing_signal": count(FlagState::MissingSignal),
            })
        })
        .collect();
    let summary = json!({
        "summary": corpus_summary(&corpus),
        "methods": methods,
        "flag_rows_not_in_corpus": unknown,
    });
    let mut summary_text = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?;
    summary_text.push('\n');

    let mut dist = csv::Writer::from_writer(Vec::new());
    dist.write_record(["method", "category", "direction", "value"]).map_err(anyhow::Error::from)?;
    for cell in method_category_distribution(&corpus, &flag_sets) {
        dist.write_record([
            cell.method.as_str(),
            cell.category.name(),
            cell.direction.name(),
            &csv_value(cell.value),
        ])
        .map_err(anyhow::Error::from)?;
    }
    let dist = dist.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;

    let aggregate: HashMap<&str, Category> = corpus
        .iter()
        .filter_map(|r| Some((r.id.as_str(), Category::aggregate(r.annotation.as_ref()?))))
        .collect();
    let mut inter = csv::Writer::from_writer(Vec::new());
    inter
        .write_record(["category", "rank", "mask", "methods", "count"])
        .map_err(anyhow::Error::from)?;
    let subsets: [(&str, Option<Category>); 4] = [
        ("all", None),
        ("correct", Some(Category::Correct)),
        ("error", Some(Category::Error)),
        ("hallucination", Some(Category::Hallucination)),
    ];
    for (label, cat) in subsets {
        let restricted: Vec<(String, BTreeSet<String>)> = flag_sets
            .iter()
            .map(|(m, ids)| {
                let ids = ids
                    .iter()
                    .filter(|id| cat.is_none() || aggregate.get(id.as_str()).copied() == cat)
                    .cloned()
                    .collect();
                (m.clone(), ids)
            })
            .collect();
        for (rank, p) in exclusive_intersections(&restricted, top_k)?.into_iter().enumerate() {
            inter
                .write_record([
                    label.to_string(),
                    (rank + 1).to_string(),
                    p.mask.to_string(),
                    p.methods.join("+"),
                    p.count.to_string(),
                ])
                .map_err(anyhow::Error::from)?;
        }
    }
    let inter = inter.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut m = ManifestBuilder::new("analyze", &[corpus_path, flags_path], json!({ "top_k": top_k }));
    m.records(corpus.len());
    m.write_output(&out.join("summary.json"), summary_text.as_bytes())?;
    m.write_output(&out.join("distribution.csv"), &dist)?;
    m.write_output(&out.join("intersections.csv"), &inter)?;
    let manifest_path = manifest.cloned().unwrap_or_else(|| out.join("manifest.json"));
    m.finish(&manifest_path)?;
    Ok(0)
}

pub struct DehallucinateArgs<'a> {
    pub corpus: &'a Path,
    pub calibration: &'a Path,
    pub candidates: &'a Path,
    pub detector: DetectorId,
    pub scorer: Scorer,
    pub include_original: bool,
    pub n_candidates: usize,
    pub params: &'a DetectorArgs,
    pub out: &'a Path,
    pub report: Option<&'a Path>,
    pub manifest: Option<&'a PathBuf>,
}

pub fn dehallucinate(a: DehallucinateArgs<'_>) -> CmdResult {
    let corpus = load_corpus(a.corpus)?;
    let table = load_calibration(a.calibration)?;
    let sidecar = parse_candidates(&read_file(a.candidates)?)
        .map_err(|e| Exit::usage(format!("{}: {e}", a.candidates.display())))?;
    let mut cfg = PipelineConfig::with_detector(a.detector, &table, a.scorer.clone())?;
    cfg.include_original = a.include_original;
    cfg.n_candidates = a.n_candidates;
    cfg.params = a.params.to_params();

    let outcomes = corpus
        .par_iter()
        .map(|rec| run_pipeline(rec, sidecar.get(&rec.id), &cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let offset = usize::from(cfg.include_original);
    let mismatched = outcomes
        .iter()
        .filter(|o| o.chosen_index.is_some() && o.scores.len() != cfg.n_candidates + offset)
        .count();
    if mismatched > 0 {
        eprintln!(
            "warning: {mismatched} flagged records have a hypothesis count other than {}",
            cfg.n_candidates
        );
    }

    let mut text = String::new();
    for o in &outcomes {
        text.push_str(&serde_json::to_string(o).map_err(anyhow::Error::from)?);
        text.push('\n');
    }
    let mut m = ManifestBuilder::new(
        "dehallucinate",
        &[a.corpus, a.calibration, a.candidates],
        json!({
            "detector": cfg.detector,
            "gamma": cfg.gamma,
            "scorer": cfg.scorer.name(),
            "include_original": cfg.include_original,
            "n_candidates": cfg.n_candidates,
            "params": cfg.params,
        }),
    );
    m.records(corpus.len());
    m.note("candidate_count_mismatches", mismatched);
    m.write_output(a.out, text.as_bytes())?;
    if let Some(report_path) = a.report {
        let before: HashMap<String, Annotation> = corpus
            .iter()
            .filter_map(|r| Some((r.id.clone(), r.annotation?)))
            .collect();
        let report = pipeline_report(&outcomes, Some(&before), None);
        let mut rt = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
        rt.push('\n');
        m.write_output(report_path, rt.as_bytes())?;
    }
    m.finish(&default_path(a.out, a.manifest))?;
    Ok(0)
}

pub fn catalog() -> CmdResult {
    let defaults = |d: DetectorId| match d {
        DetectorId::AttnIgnSrc => "tau=0.2",
        DetectorId::Tng => "n=4, t=2",
        DetectorId::Rt => "min distinct sources=2",
        DetectorId::McDsim => "sim=chrF2/100, N from record",
        DetectorId::Chrf2 => "beta=2, orders 1-6",
        _ => "-",
    };
    println!("{:<14} {:<11} {:<16} {:<28} defaults", "detector", "kind", "direction", "signals");
    for d in DetectorId::ALL {
        let kind = serde_json::to_value(d.kind()).map_err(anyhow::Error::from)?;
        let dir = serde_json::to_value(d.direction()).map_err(anyhow::Error::from)?;
        println!(
            "{:<14} {:<11} {:<16} {:<28} {}",
            d.name(),
            kind.as_str().unwrap_or_default(),
            dir.as_str().unwrap_or_default(),
            d.required_signals(),
            defaults(d)
        );
    }
    Ok(0)
}
