//! Brute-force reference implementations used to check the library.
//!
//! Nothing here calls into the code under test except for plain data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hallsentry::record::AttentionMatrix;
use hallsentry::TranslationRecord;
use rand::seq::SliceRandom;
use rand::Rng;

/// chrF computed straight from the definition with linear scans.
pub fn chrf_oracle(hyp: &str, reference: &str, beta: f64, max_order: usize) -> f64 {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if h.is_empty() && r.is_empty() {
        return 100.0;
    }
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let grams = |s: &[char], n: usize| -> Vec<String> {
        if s.len() < n {
            return vec![];
        }
        (0..=s.len() - n).map(|i| s[i..i + n].iter().collect()).collect()
    };
    let mut ps = Vec::new();
    let mut rs = Vec::new();
    for n in 1..=max_order {
        let hg = grams(&h, n);
        let rg = grams(&r, n);
        if hg.is_empty() && rg.is_empty() {
            continue;
        }
        let mut distinct = hg.clone();
        distinct.sort();
        distinct.dedup();
        let mut matches = 0usize;
        for g in &distinct {
            let ch = hg.iter().filter(|x| *x == g).count();
            let cr = rg.iter().filter(|x| *x == g).count();
            matches += ch.min(cr);
        }
        ps.push(if hg.is_empty() { 0.0 } else { matches as f64 / hg.len() as f64 });
        rs.push(if rg.is_empty() { 0.0 } else { matches as f64 / rg.len() as f64 });
    }
    let p = ps.iter().sum::<f64>() / ps.len() as f64;
    let rr = rs.iter().sum::<f64>() / rs.len() as f64;
    if p + rr == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    100.0 * (1.0 + b2) * p * rr / (b2 * p + rr)
}

/// Counts of every window by comparing each start position with every other.
pub fn window_counts_oracle(units: &[String], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut out = BTreeMap::new();
    if n == 0 || units.len() < n {
        return out;
    }
    let starts = units.len() - n + 1;
    for i in 0..starts {
        let c = (0..starts).filter(|&j| units[j..j + n] == units[i..i + n]).count();
        out.insert(units[i..i + n].to_vec(), c);
    }
    out
}

pub fn top_count_oracle(units: &[String], n: usize) -> usize {
    window_counts_oracle(units, n).values().copied().max().unwrap_or(0)
}

pub fn mean_oracle(xs: &[f64]) -> f64 {
    let mut total = 0.0;
    for x in xs {
        total += *x;
    }
    total / xs.len() as f64
}

pub fn eos_oracle(rows: &[Vec<f64>]) -> f64 {
    let last = rows[0].len() - 1;
    mean_oracle(&rows.iter().map(|r| r[last]).collect::<Vec<_>>())
}

pub fn ign_src_oracle(rows: &[Vec<f64>], tau: f64) -> f64 {
    let cols = rows[0].len();
    let mut ignored = 0;
    for j in 0..cols {
        let mut s = 0.0;
        for r in rows {
            s += r[j];
        }
        if s < tau {
            ignored += 1;
        }
    }
    ignored as f64 / cols as f64
}

pub fn tng_oracle(src: &str, mt: &str, n: usize, t: usize) -> bool {
    let words = |s: &str| -> Vec<String> { s.split_whitespace().map(|w| w.to_lowercase()).collect() };
    top_count_oracle(&words(mt), n) as i64 - top_count_oracle(&words(src), n) as i64 >= t as i64
}

fn norm(s: &str) -> String {
    s.split_whitespace().map(|w| w.to_lowercase()).collect::<Vec<_>>().join(" ")
}

/// Number of distinct sources among all records whose normalised translation
/// equals this record's, by pairwise comparison.
pub fn rt_oracle(corpus: &[TranslationRecord], i: usize, min_sources: usize) -> bool {
    let key = norm(&corpus[i].mt);
    let mut sources: Vec<&str> = Vec::new();
    for other in corpus {
        if norm(&other.mt) == key && !sources.contains(&other.src.as_str()) {
            sources.push(&other.src);
        }
    }
    sources.len() >= min_sources
}

/// k-th smallest via a full sort.
pub fn quantile_oracle(scores: &[f64], q: f64) -> f64 {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((q * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    v[k - 1]
}

/// Exclusive intersections by literal set algebra over every subset.
pub fn exclusive_oracle(sets: &[(String, BTreeSet<String>)]) -> BTreeMap<u64, usize> {
    let m = sets.len();
    let mut out = BTreeMap::new();
    for mask in 1u64..(1 << m) {
        let inside: Vec<&BTreeSet<String>> =
            (0..m).filter(|i| mask & (1 << i) != 0).map(|i| &sets[i].1).collect();
        let outside: Vec<&BTreeSet<String>> =
            (0..m).filter(|i| mask & (1 << i) == 0).map(|i| &sets[i].1).collect();
        let mut inter: BTreeSet<String> = inside[0].clone();
        for s in &inside[1..] {
            inter = inter.intersection(s).cloned().collect();
        }
        for s in &outside {
            inter = inter.difference(s).cloned().collect();
        }
        if !inter.is_empty() {
            out.insert(mask, inter.len());
        }
    }
    out
}

/// Kappa from a 2x2 contingency table: a = both yes, b = A yes / B no,
/// c = A no / B yes, d = both no.
pub fn kappa_from_table(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let po = (a + d) / n;
    let pe = ((a + b) / n) * ((a + c) / n) + ((c + d) / n) * ((b + d) / n);
    (po - pe) / (1.0 - pe)
}

pub fn argmax_oracle(scores: &[f64]) -> usize {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == max).unwrap()
}

// ---- random fixtures ----

const VOCAB: &[&str] = &["a", "b", "c", "the", "Haus", "dog", "über", "x", ".", ","];

pub fn random_words<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', ' ', 'é', 'ß', '.', 'x', 'y'];
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn stochastic_rows<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..cols).map(|_| rng.gen::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum::<f64>().max(1e-12);
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect()
}

/// A record with random logprobs, attention, hypotheses and labels.
pub fn random_record<R: Rng>(rng: &mut R, id: usize) -> TranslationRecord {
    let src = random_words(rng, 12);
    let mt = random_words(rng, 12);
    let src_tokens: Vec<String> = src.split_whitespace().map(String::from).chain(["</s>".into()]).collect();
    let mt_tokens: Vec<String> = mt.split_whitespace().map(String::from).chain(["</s>".into()]).collect();
    let logprobs: Vec<f64> = (0..mt_tokens.len()).map(|_| -rng.gen::<f64>() * 5.0).collect();
    let mut rec = TranslationRecord::new(format!("r{id}"), src, src_tokens.clone(), mt, mt_tokens.clone(), logprobs);
    rec.attention = Some(AttentionMatrix::from_rows(&stochastic_rows(rng, mt_tokens.len(), src_tokens.len())).unwrap());
    let n_hyp = rng.gen_range(1..=10);
    rec.mc_hypotheses = Some((0..n_hyp).map(|_| random_words(rng, 12)).collect());
    rec.token_hal_labels = Some((0..mt_tokens.len()).map(|_| rng.gen_range(0..=1)).collect());
    rec
}

/// A corpus with many repeated translations and sources, for RT/TNG checks.
pub fn repetitive_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<TranslationRecord> {
    let srcs: Vec<String> = (0..rng.gen_range(1..=12)).map(|_| random_words(rng, 10)).collect();
    let mts: Vec<String> = (0..rng.gen_range(1..=12)).map(|_| random_words(rng, 10)).collect();
    (0..n)
        .map(|i| {
            let src = srcs.choose(rng).unwrap().clone();
            let mut mt = mts.choose(rng).unwrap().clone();
            if rng.gen_bool(0.2) {
                mt = mt.to_uppercase();
            }
            if rng.gen_bool(0.2) {
                mt = mt.replace(' ', "   ");
            }
            TranslationRecord::new(format!("r{i}"), src, vec![], mt, vec![], vec![])
        })
        .collect()
}
