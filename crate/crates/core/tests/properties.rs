mod common;

use std::collections::{BTreeSet, HashMap};

use common::*;
use hallsentry::analysis::{cohens_kappa, corpus_summary, exclusive_intersections};
use hallsentry::calibration::{calibrate_threshold, flag, intersect_with_quality, FlagState};
use hallsentry::detectors::{
    attn_ign_src, attn_to_eos, mc_dsim, oriented_score, seq_logprob, tng_flag, DetectorId, RtIndex,
};
use hallsentry::record::{parse_record, validate_record, AttentionMatrix};
use hallsentry::text_metrics::{chrf2, lexical_similarity, ngram_counts, top_repeated_count, ChrfSimilarity};
use hallsentry::{Annotation, TranslationRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn units() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from), 0..50)
}

fn annotation() -> impl Strategy<Value = Annotation> {
    (0u8..6, any::<bool>(), any::<bool>()).prop_map(|(k, ug, ne)| match k {
        0 => Annotation { correct: true, ..Default::default() },
        1 => Annotation { ug, ne, other_error: !ug && !ne, ..Default::default() },
        2 => Annotation { osc: true, ug, ..Default::default() },
        3 => Annotation { sd: true, ne, ..Default::default() },
        4 => Annotation { fd: true, ..Default::default() },
        _ => Annotation { osc: true, sd: true, ..Default::default() },
    })
}

proptest! {
    #[test]
    fn top_count_equals_brute_force(u in units(), n in 1usize..6) {
        let via_counts = ngram_counts(&u, n).unwrap().max_count();
        prop_assert_eq!(top_repeated_count(&u, n).unwrap(), via_counts);
        prop_assert_eq!(via_counts, top_count_oracle(&u, n));
    }

    #[test]
    fn chrf_bounds_and_identity(a in "[a-e éß]{0,25}", b in "[a-e éß]{0,25}") {
        let v = chrf2(&a, &b);
        prop_assert!((0.0..=100.0).contains(&v));
        let s = lexical_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        if !a.trim().is_empty() {
            prop_assert_eq!(chrf2(&a, &a), 100.0);
        }
    }

    #[test]
    fn seq_logprob_is_mean(xs in prop::collection::vec(-50.0f64..=0.0, 1..100)) {
        let mut rec = TranslationRecord::new("r", "", vec![], "", vec![], vec![]);
        rec.token_logprobs = xs.clone();
        let v = seq_logprob(&rec).unwrap();
        prop_assert!((v - mean_oracle(&xs)).abs() < 1e-12);
        prop_assert!(v <= 0.0);
    }

    #[test]
    fn mc_dsim_ignores_hypothesis_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rec = random_record(&mut rng, 0);
        let a = mc_dsim(&rec, &ChrfSimilarity).unwrap();
        rec.mc_hypotheses.as_mut().unwrap().reverse();
        let b = mc_dsim(&rec, &ChrfSimilarity).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn tng_matches_oracle(src in units(), mt in units(), n in 1usize..5, t in 1usize..4) {
        let (s, m) = (src.join(" "), mt.join(" "));
        let rec = TranslationRecord::new("r", s.clone(), vec![], m.clone(), vec![], vec![]);
        prop_assert_eq!(tng_flag(&rec, n, t).unwrap(), tng_oracle(&s, &m, n, t));
    }

    #[test]
    fn oriented_score_strictly_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assume!(a < b);
        for d in DetectorId::ALL.into_iter().filter(|d| !d.is_binary()) {
            let (oa, ob) = (oriented_score(d, a).unwrap(), oriented_score(d, b).unwrap());
            prop_assert!(oa != ob);
        }
    }

    #[test]
    fn calibration_is_permutation_invariant(mut xs in prop::collection::vec(-1e3f64..1e3, 1..300), q in 0.001f64..0.999) {
        let g = calibrate_threshold(&xs, q).unwrap();
        prop_assert_eq!(g, quantile_oracle(&xs, q));
        xs.reverse();
        prop_assert_eq!(calibrate_threshold(&xs, q).unwrap(), g);
    }

    #[test]
    fn flag_is_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3, g in -1e3f64..1e3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if flag(hi, g) {
            prop_assert!(flag(lo, g));
        }
    }

    #[test]
    fn intersection_never_adds_flags(
        states in prop::collection::vec(0u8..3, 1..200),
        qualities in prop::collection::vec(prop::option::of(-10.0f64..10.0), 200),
        p in 0.001f64..0.999,
    ) {
        let flags: Vec<(String, FlagState)> = states.iter().enumerate().map(|(i, s)| {
            (format!("r{i}"), [FlagState::Flagged, FlagState::NotFlagged, FlagState::MissingSignal][*s as usize])
        }).collect();
        let quality: HashMap<String, f64> = qualities.iter().enumerate()
            .filter_map(|(i, q)| q.map(|v| (format!("r{i}"), v))).collect();
        let out = intersect_with_quality(&flags, &quality, p).unwrap();
        for ((_, before), (_, after)) in flags.iter().zip(&out.flags) {
            if after.is_flagged() {
                prop_assert!(before.is_flagged());
            }
        }
    }

    #[test]
    fn patterns_partition_the_union(
        members in prop::collection::vec(prop::collection::btree_set(0usize..60, 0..40), 1..6),
        k in 1usize..70,
    ) {
        let sets: Vec<(String, BTreeSet<String>)> = members.iter().enumerate()
            .map(|(i, m)| (format!("m{i}"), m.iter().map(|x| x.to_string()).collect())).collect();
        let union: BTreeSet<&String> = sets.iter().flat_map(|(_, s)| s.iter()).collect();
        let all = exclusive_intersections(&sets, 64).unwrap();
        prop_assert_eq!(all.iter().map(|p| p.count).sum::<usize>(), union.len());
        let masks: BTreeSet<u64> = all.iter().map(|p| p.mask).collect();
        prop_assert_eq!(masks.len(), all.len());
        let top = exclusive_intersections(&sets, k).unwrap();
        prop_assert_eq!(&top[..], &all[..k.min(all.len())]);
    }

    #[test]
    fn kappa_symmetric_and_relabel_invariant(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
        let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert!((k - cohens_kappa(&b, &a).unwrap()).abs() < 1e-12);
        let na: Vec<bool> = a.iter().map(|x| !x).collect();
        let nb: Vec<bool> = b.iter().map(|x| !x).collect();
        prop_assert!((k - cohens_kappa(&na, &nb).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
    }

    #[test]
    fn summary_partitions_annotated(anns in prop::collection::vec(prop::option::of(annotation()), 0..80)) {
        let corpus: Vec<TranslationRecord> = anns.iter().enumerate().map(|(i, a)| {
            let mut r = TranslationRecord::new(format!("r{i}"), "", vec![], "", vec![], vec![]);
            r.annotation = *a;
            r
        }).collect();
        let s = corpus_summary(&corpus);
        prop_assert_eq!(s.correct + s.error + s.hallucination, s.annotated);
        prop_assert_eq!(s.annotated + s.unannotated, corpus.len());
    }

    #[test]
    fn record_round_trip(seed in any::<u64>(), with_ref in any::<bool>(), ann in prop::option::of(annotation())) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rec = random_record(&mut rng, 1);
        if with_ref {
            rec.reference = Some(random_words(&mut rng, 8));
        }
        rec.annotation = ann;
        rec.external_scores = Some([("comet".to_string(), seed as f64 / 7.0 - 1e12)].into());
        rec.extra.insert("system".into(), serde_json::json!({"name": "baseline", "beam": 5}));
        let back = parse_record(&rec.to_json_line()).unwrap();
        prop_assert_eq!(&back, &rec);
        prop_assert!(validate_record(&back).is_valid());
        prop_assert_eq!(validate_record(&back), validate_record(&rec));
    }

    #[test]
    fn missing_signals_never_default(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rec = random_record(&mut rng, 0);
        rec.attention = None;
        rec.mc_hypotheses = None;
        rec.token_logprobs.clear();
        prop_assert!(attn_to_eos(&rec).is_err());
        prop_assert!(attn_ign_src(&rec, 0.2).is_err());
        prop_assert!(mc_dsim(&rec, &ChrfSimilarity).is_err());
        prop_assert!(seq_logprob(&rec).is_err());
    }
}

#[test]
fn attention_rows_from_generator_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let rec = random_record(&mut rng, i);
        assert!(validate_record(&rec).is_valid(), "{:?}", validate_record(&rec));
    }
    let _ = AttentionMatrix::from_rows(&[[1.0]]).unwrap();
    let _ = RtIndex::default();
}
