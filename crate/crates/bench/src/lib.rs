//! Synthetic corpora for benchmarks.

use hallsentry::record::AttentionMatrix;
use hallsentry::TranslationRecord;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "the", "a", "house", "dog", "runs", "quickly", "over", "bridge", "river", "green", "old", "city",
    "der", "die", "das", "Haus", "Hund", "läuft", "schnell", "über", "Brücke", "Fluss", "alt",
];

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn stochastic_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// A corpus of `n` records carrying every signal the detectors read.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<TranslationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (src_len, mt_len) = (rng.gen_range(4..20), rng.gen_range(4..20));
            let src = sentence(&mut rng, src_len);
            let mt = sentence(&mut rng, mt_len);
            let src_tokens: Vec<String> =
                src.split(' ').map(String::from).chain(["</s>".into()]).collect();
            let mt_tokens: Vec<String> =
                mt.split(' ').map(String::from).chain(["</s>".into()]).collect();
            let logprobs = (0..mt_tokens.len()).map(|_| -rng.gen::<f64>() * 3.0).collect();
            let rows: Vec<Vec<f64>> = (0..mt_tokens.len())
                .map(|_| stochastic_row(&mut rng, src_tokens.len()))
                .collect();
            let mut rec = TranslationRecord::new(format!("s{i}"), src, src_tokens, mt, mt_tokens, logprobs);
            rec.attention = Some(AttentionMatrix::from_rows(&rows).unwrap());
            rec.mc_hypotheses = Some((0..10).map(|_| sentence(&mut rng, 8)).collect());
            rec.reference = Some(sentence(&mut rng, 10));
            rec.external_scores = Some([("comet-qe".to_string(), rng.gen_range(-1.0..1.0))].into());
            rec
        })
        .collect()
}
