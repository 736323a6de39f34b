//! Corpus analytics over annotations and flags.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::{Annotation, TranslationRecord};

/// Reporting category of an annotated translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Correct,
    Error,
    Osc,
    Sd,
    Fd,
    /// Aggregate: any of osc, sd, fd.
    Hallucination,
}

impl Category {
    /// Categories reported in distribution tables, in output order.
    pub const REPORTED: [Category; 6] = [
        Category::Correct,
        Category::Error,
        Category::Hallucination,
        Category::Osc,
        Category::Sd,
        Category::Fd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Correct => "correct",
            Category::Error => "error",
            Category::Osc => "osc",
            Category::Sd => "sd",
            Category::Fd => "fd",
            Category::Hallucination => "hallucination",
        }
    }

    /// Every category an annotation belongs to. A hallucination belongs to
    /// `Hallucination` plus each of its osc/sd/fd axes.
    pub fn of(a: &Annotation) -> Vec<Category> {
        if a.is_hallucination() {
            let mut out = vec![Category::Hallucination];
            if a.osc {
                out.push(Category::Osc);
            }
            if a.sd {
                out.push(Category::Sd);
            }
            if a.fd {
                out.push(Category::Fd);
            }
            out
        } else if a.correct {
            vec![Category::Correct]
        } else {
            vec![Category::Error]
        }
    }

    /// The three-way aggregate bucket: correct, error or hallucination.
    pub fn aggregate(a: &Annotation) -> Category {
        if a.is_hallucination() {
            Category::Hallucination
        } else if a.correct {
            Category::Correct
        } else {
            Category::Error
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub annotated: usize,
    pub unannotated: usize,
    pub correct: usize,
    pub error: usize,
    pub osc: usize,
    pub sd: usize,
    pub fd: usize,
    pub hallucination: usize,
    /// `hallucination / annotated`; `None` for an empty corpus.
    pub hallucination_rate: Option<f64>,
    /// Error records carrying each non-hallucination pathology.
    pub error_undergeneration: usize,
    pub error_named_entity: usize,
    pub error_other: usize,
}

pub fn corpus_summary<'a>(corpus: impl IntoIterator<Item = &'a TranslationRecord>) -> CorpusSummary {
    let mut s = CorpusSummary::default();
    for rec in corpus {
        let Some(a) = &rec.annotation else {
            s.unannotated += 1;
            continue;
        };
        s.annotated += 1;
        match Category::aggregate(a) {
            Category::Hallucination => {
                s.hallucination += 1;
                s.osc += a.osc as usize;
                s.sd += a.sd as usize;
                s.fd += a.fd as usize;
            }
            Category::Correct => s.correct += 1,
            _ => {
                s.error += 1;
                s.error_undergeneration += a.ug as usize;
                s.error_named_entity += a.ne as usize;
                s.error_other += a.other_error as usize;
            }
        }
    }
    s.hallucination_rate = (s.annotated > 0).then(|| s.hallucination as f64 / s.annotated as f64);
    s
}

/// Which way a method/category proportion is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProportionDirection {
    /// Share of the method's flagged records that fall in the category.
    ShareOfFlagged,
    /// Share of the category's records that the method flags.
    ShareOfCategory,
}

impl ProportionDirection {
    pub fn name(self) -> &'static str {
        match self {
            ProportionDirection::ShareOfFlagged => "share-of-flagged",
            ProportionDirection::ShareOfCategory => "share-of-category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionCell {
    pub method: String,
    pub category: Category,
    pub direction: ProportionDirection,
    /// `None` when the denominator is zero.
    pub value: Option<f64>,
}

/// Method x category proportions in both directions, over annotated records.
///
/// `flag_sets` holds, per method, the ids it flags. Unannotated ids are
/// ignored. Cells are ordered by method (input order), then category, then
/// direction.
pub fn method_category_distribution(
    corpus: &[TranslationRecord],
    flag_sets: &[(String, BTreeSet<String>)],
) -> Vec<DistributionCell> {
    let categories: HashMap<&str, Vec<Category>> = corpus
        .iter()
        .filter_map(|r| Some((r.id.as_str(), Category::of(r.annotation.as_ref()?))))
        .collect();
    let mut category_sizes: BTreeMap<Category, usize> = BTreeMap::new();
    for cats in categories.values() {
        for &c in cats {
            *category_sizes.entry(c).or_default() += 1;
        }
    }

    let mut cells = Vec::new();
    for (method, ids) in flag_sets {
        let mut flagged = 0usize;
        let mut hits: BTreeMap<Category, usize> = BTreeMap::new();
        for id in ids {
            if let Some(cats) = categories.get(id.as_str()) {
                flagged += 1;
                for &c in cats {
                    *hits.entry(c).or_default() += 1;
                }
            }
        }
        for c in Category::REPORTED {
            let h = hits.get(&c).copied().unwrap_or(0) as f64;
            let size = category_sizes.get(&c).copied().unwrap_or(0);
            for (direction, denom) in [
                (ProportionDirection::ShareOfFlagged, flagged),
                (ProportionDirection::ShareOfCategory, size),
            ] {
                cells.push(DistributionCell {
                    method: method.clone(),
                    category: c,
                    direction,
                    value: (denom > 0).then(|| h / denom as f64),
                });
            }
        }
    }
    cells
}

/// Records flagged by exactly the methods in `mask` (bit i = method i).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapPattern {
    pub mask: u64,
    pub methods: Vec<String>,
    pub count: usize,
}

/// Exclusive intersection sizes: for each non-empty method subset, the number
/// of records flagged by every method in it and by none outside it.
///
/// Only non-empty patterns are returned, sorted by count descending then mask
/// ascending, truncated to `k`.
pub fn exclusive_intersections(
    flag_sets: &[(String, BTreeSet<String>)],
    k: usize,
) -> Result<Vec<OverlapPattern>> {
    if k < 1 {
        return Err(Error::argument("top-k must be at least 1"));
    }
    if flag_sets.len() > 64 {
        return Err(Error::argument("at most 64 methods are supported"));
    }
    let mut signature: HashMap<&str, u64> = HashMap::new();
    for (i, (_, ids)) in flag_sets.iter().enumerate() {
        for id in ids {
            *signature.entry(id.as_str()).or_default() |= 1 << i;
        }
    }
    let mut tally: BTreeMap<u64, usize> = BTreeMap::new();
    for mask in signature.into_values() {
        *tally.entry(mask).or_default() += 1;
    }
    let mut patterns: Vec<OverlapPattern> = tally
        .into_iter()
        .map(|(mask, count)| OverlapPattern {
            mask,
            methods: flag_sets
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, (m, _))| m.clone())
                .collect(),
            count,
        })
        .collect();
    patterns.sort_by(|a, b| b.count.cmp(&a.count).then(a.mask.cmp(&b.mask)));
    patterns.truncate(k);
    Ok(patterns)
}

/// Cohen's kappa for two binary label vectors.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::argument(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::argument("label vectors are empty"));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let po = agree / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe == 1.0 {
        // Both raters used a single identical label throughout.
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}
