//! Public-API checks against values computed outside this crate
//! (Python's difflib with autojunk off, hand-evaluated formulas).

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use xmcaug::corpus::{compute_propensities, make_pairs, Dataset, Example, LabelSet, PairConfig};
use xmcaug::gen_aug::{build_augmented_dataset, run_gda, DecodeConfig, GdaConfig, GenTrainConfig, SourceSelection};
use xmcaug::metrics::{evaluate, ndcg_at_k, precision_at_k, psp_at_k, Metric, RankedPrediction};
use xmcaug::textsim::{bleu, similarity_ratio, tokenize};

#[test]
fn similarity_matches_difflib() {
    let cases = [
        ("stainless steel travel mug", "insulated steel mug for travel", 0.6071428571428571),
        ("abcd", "bcde", 0.75),
        ("kitten", "sitting", 0.6153846153846154),
        ("", "abc", 0.0),
        ("aaaa", "aa", 0.6666666666666666),
        ("", "", 1.0),
    ];
    for (a, b, want) in cases {
        assert_eq!(similarity_ratio(a, b), want, "{a:?} vs {b:?}");
    }
}

#[test]
fn propensities_match_the_closed_form() {
    let pm = compute_propensities(&[0, 5, 100], 1000, 0.55, 1.5).unwrap();
    for (got, want) in pm.p.iter().zip([0.11332486734550759, 0.222572993807628, 0.5648345357426586]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
    }
}

#[test]
fn bleu_reference_values() {
    let cand = tokenize("the cat sat on the mat");
    let refr = tokenize("the cat is on the mat");
    // p = 5/6, 3/5, 1/4, floor for the empty 4-gram match.
    assert_abs_diff_eq!(bleu(&cand, &refr, 4), 0.003343701524882112, epsilon = 1e-12);
    assert_abs_diff_eq!(bleu(&cand, &refr, 3), 0.5, epsilon = 1e-12);
    let short = tokenize("the cat");
    assert_abs_diff_eq!(bleu(&short, &tokenize("the cat sat on the mat"), 2), (-2.0f64).exp(), epsilon = 1e-12);
    assert_eq!(bleu(&refr, &refr, 4), 1.0);
}

#[test]
fn hand_computed_ranking_metrics() {
    // Ranked [2, 0, 1, 3, 4] against gold {0, 3}.
    let gold: LabelSet = [0, 3].into_iter().collect();
    let rp = RankedPrediction::new(vec![2, 0, 1, 3, 4], gold).unwrap();
    assert_eq!(precision_at_k(&rp, 1).unwrap(), 0.0);
    assert_abs_diff_eq!(precision_at_k(&rp, 5).unwrap(), 0.4);
    let dcg = 1.0 / 3f64.log2() + 1.0 / 5f64.log2();
    let idcg = 1.0 + 1.0 / 3f64.log2();
    assert_abs_diff_eq!(ndcg_at_k(&rp, 5, 2.0).unwrap(), dcg / idcg, epsilon = 1e-15);
    let pm = xmcaug::corpus::PropensityModel { p: vec![0.5, 1.0, 1.0, 0.25, 1.0], ..xmcaug::corpus::PropensityModel::unit(0) };
    assert_abs_diff_eq!(psp_at_k(&rp, 5, &pm).unwrap(), (2.0 + 4.0) / 5.0, epsilon = 1e-15);
    let report = evaluate(&[rp.clone(), rp], &pm, &[1, 3, 5]).unwrap();
    assert_eq!(report.get(Metric::Precision, 3), Some(1.0 / 3.0));
    assert_eq!(report.evaluated, 2);
}

fn group_dataset() -> Dataset {
    let rows = [
        ("a1", "red ceramic coffee mug with handle", vec!["kitchen"]),
        ("a2", "large blue tea cup and saucer set", vec!["kitchen"]),
        ("a3", "red ceramic coffee mug with handle", vec!["kitchen"]),
        ("b1", "hardcover novel about the sea and sailors", vec!["books", "fiction"]),
        ("b2", "paperback story of a long ocean voyage", vec!["books", "fiction"]),
        ("c1", "tiny", vec!["books", "fiction"]),
        ("d1", "garden hose with brass spray nozzle", vec!["garden"]),
    ];
    Dataset::from_named(rows.into_iter().map(|(id, t, ls)| (Example::new(id, t, "", []), ls))).unwrap()
}

#[test]
fn pairs_share_label_sets_and_respect_filters() {
    let d = group_dataset();
    let ps = make_pairs(&d, &PairConfig { min_words: 3, ..PairConfig::default() }).unwrap();
    let mut got: Vec<(String, String)> = ps.pairs.clone();
    got.sort();
    // a1/a3 are identical (ratio 1 > 0.95); c1 is too short; d1 has no partner.
    let want: Vec<(String, String)> = [("a1", "a2"), ("a2", "a1"), ("a2", "a3"), ("a3", "a2"), ("b1", "b2"), ("b2", "b1")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(got, want);
    let capped = make_pairs(&d, &PairConfig { min_words: 3, max_pairs_per_group: 1, ..PairConfig::default() }).unwrap();
    assert_eq!(capped.len(), 2);
}

#[test]
fn tiny_gda_run_inherits_labels() {
    let d = group_dataset();
    let cfg = GdaConfig {
        pairs: PairConfig { min_words: 3, ..PairConfig::default() },
        train: GenTrainConfig {
            learning_rate: 0.01,
            epochs: 20,
            dim: 16,
            ff_dim: 32,
            layers: 1,
            max_positions: 48,
            min_token_freq: 1,
            ..GenTrainConfig::default()
        },
        decode: DecodeConfig { beam_width: 3, max_len: 12, ..DecodeConfig::default() },
        sources: SourceSelection::All,
        max_words: 40,
    };
    let out = run_gda(&d, &["books"], &cfg).unwrap();
    assert_eq!(out.pairs.len(), 4);
    assert!(out.generated.iter().all(|(src, t)| !t.is_empty() && !src.starts_with('b')));
    let aug = build_augmented_dataset(&d, &out.generated, 0.5).unwrap();
    assert_eq!(aug.len(), d.len() + out.generated.len());
    for a in &aug.examples[d.len()..] {
        let src = d.get(a.example.id.split('~').next().unwrap()).unwrap();
        assert_eq!(a.example.labels, src.labels);
    }
}

proptest! {
    #[test]
    fn similarity_bounded_and_reflexive(a in "[ab c]{0,20}", b in "[ab c]{0,20}") {
        let r = similarity_ratio(&a, &b);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(similarity_ratio(&a, &a), 1.0);
    }

    #[test]
    fn metrics_bounded(perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(), gold in proptest::collection::btree_set(0..12usize, 1..6)) {
        let rp = RankedPrediction::new(perm, gold.clone()).unwrap();
        for k in [1, 3, 5] {
            let p = precision_at_k(&rp, k).unwrap();
            let n = ndcg_at_k(&rp, k, 2.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            prop_assert!(p <= gold.len().min(k) as f64 / k as f64 + 1e-12);
        }
    }
}
