//! N-gram counting, sentence-level chrF and the similarity interface used by
//! Monte-Carlo dissimilarity.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Sliding-window n-gram counts over a sequence of units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramMultiset<T: Eq + Hash> {
    n: usize,
    counts: HashMap<Vec<T>, usize>,
}

impl<T: Eq + Hash> NGramMultiset<T> {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn count(&self, gram: &[T]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Number of distinct n-grams.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of n-gram occurrences (with multiplicity).
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], usize)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Clipped match count: sum over n-grams of the smaller of the two counts.
    pub fn overlap(&self, other: &Self) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(g, &c)| c.min(large.count(g)))
            .sum()
    }
}

pub fn ngram_counts<T: Eq + Hash + Clone>(units: &[T], n: usize) -> Result<NGramMultiset<T>> {
    if n == 0 {
        return Err(Error::argument("n-gram order must be at least 1"));
    }
    let mut counts = HashMap::new();
    if units.len() >= n {
        for w in units.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    Ok(NGramMultiset { n, counts })
}

/// Occurrence count of the most repeated n-gram, 0 when the sequence is
/// shorter than `n`.
pub fn top_repeated_count<T: Eq + Hash + Clone>(units: &[T], n: usize) -> Result<usize> {
    Ok(ngram_counts(units, n)?.max_count())
}

/// Sentence-level chrF on a 0..=100 scale.
///
/// Whitespace is dropped before extracting character n-grams of orders
/// `1..=max_order`. Precision and recall are macro-averaged over the orders
/// for which either string has at least one n-gram; an order where one side
/// has no n-grams contributes 0 to that side's average.
pub fn chrf(hyp: &str, reference: &str, beta: f64, max_order: usize) -> Result<f64> {
    if max_order == 0 {
        return Err(Error::argument("chrF max_order must be at least 1"));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::argument("chrF beta must be positive"));
    }
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    match (h.is_empty(), r.is_empty()) {
        (true, true) => return Ok(100.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }

    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_order {
        let hg = ngram_counts(&h, n)?;
        let rg = ngram_counts(&r, n)?;
        let (ht, rt) = (hg.total(), rg.total());
        if ht == 0 && rt == 0 {
            break;
        }
        let matches = hg.overlap(&rg) as f64;
        if ht > 0 {
            precision += matches / ht as f64;
        }
        if rt > 0 {
            recall += matches / rt as f64;
        }
        orders += 1;
    }
    let p = precision / orders as f64;
    let r = recall / orders as f64;
    if p + r == 0.0 {
        return Ok(0.0);
    }
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (1.0 + b2) * p * r / denom)
}

/// chrF with the standard chrF2 settings (beta 2, orders 1..=6).
pub fn chrf2(hyp: &str, reference: &str) -> f64 {
    chrf(hyp, reference, 2.0, 6).expect("default chrF parameters are valid")
}

/// Pairwise similarity in `[0, 1]`; the first argument plays the hypothesis
/// role.
pub trait Similarity: Sync {
    fn similarity(&self, hyp: &str, reference: &str) -> f64;
}

impl<F> Similarity for F
where
    F: Fn(&str, &str) -> f64 + Sync,
{
    fn similarity(&self, hyp: &str, reference: &str) -> f64 {
        self(hyp, reference)
    }
}

/// The built-in similarity: chrF2 rescaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChrfSimilarity;

impl Similarity for ChrfSimilarity {
    fn similarity(&self, hyp: &str, reference: &str) -> f64 {
        lexical_similarity(hyp, reference)
    }
}

pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    chrf2(a, b) / 100.0
}
