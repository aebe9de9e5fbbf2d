use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Dataset, Example, LabelSet};
use crate::gen_aug::{AugmentedDataset, Provenance};
use crate::metrics::{precision_at_k, RankedPrediction};
use crate::nn::{finite_difference, relative_error, Parameters};

fn tiny_encoder(embedding: Array2<f64>) -> EncoderParams {
    let d = embedding.ncols();
    EncoderParams {
        embedding,
        pool_weight: Array2::eye(d),
        pool_bias: Array1::zeros(d),
        cls_id: 0,
        sep_id: 1,
    }
}

#[test]
fn encode_shapes_and_pooling() {
    let vocab = TokenVocab::from(vec![UNK.into(), CLS.into(), SEP.into(), "toy".into(), "car".into()]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut enc = tiny_encoder(crate::nn::normal2(5, 3, 1e-3, &mut rng));
    enc.cls_id = 1;
    enc.sep_id = 2;
    let (h, _) = encode(&TokenSequence::from_tokens(["toy"]), &vocab, &enc);
    assert_eq!(h.nrows(), 3);

    let toks = TokenSequence::from_tokens(["toy", "car", "zzz"]);
    let (h, e) = encode(&toks, &vocab, &enc);
    let mean = h.mean_axis(Axis(0)).unwrap();
    for (a, b) in e.iter().zip(mean.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }
    let (_, e2) = encode(&TokenSequence::from_tokens(["zzz", "toy", "car"]), &vocab, &enc);
    for (a, b) in e.iter().zip(e2.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }
}

#[test]
fn vanilla_cases() {
    let head = VanillaHead {
        weight: Array2::zeros((3, 2)),
        bias: Array1::zeros(3),
    };
    assert!(vanilla_forward(&array![0.3, -1.0], &head).unwrap().iter().all(|&p| p == 0.5));
    let head = VanillaHead {
        weight: array![[2.0, 0.0]],
        bias: array![-2.0],
    };
    assert_eq!(vanilla_forward(&array![1.0, 0.0], &head).unwrap()[0], 0.5);
    let mut last = 0.0;
    for s in [0.0, 1.0, 5.0, 20.0] {
        let p = vanilla_forward(&array![s, 0.0], &VanillaHead { weight: array![[1.0, 0.0]], bias: array![0.0] }).unwrap()[0];
        assert!(p > last);
        last = p;
    }
    assert!(vanilla_forward(&array![1.0], &head).is_err());
}

fn la_head(attention: Array2<f64>) -> LabelAttentionHead {
    let (k, d) = attention.dim();
    LabelAttentionHead {
        attention,
        weight: Array2::zeros((k, d)),
        bias: Array1::zeros(k),
    }
}

#[test]
fn label_attention_cases() {
    let h = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
    let (alpha, m, _) = label_attention_forward(&h, &la_head(Array2::zeros((2, 2)))).unwrap();
    assert!(alpha.iter().all(|&a| (a - 1.0 / 3.0).abs() < 1e-15));
    let mean = h.mean_axis(Axis(0)).unwrap();
    for k in 0..2 {
        for j in 0..2 {
            assert_abs_diff_eq!(m[[k, j]], mean[j], epsilon = 1e-12);
        }
    }

    let single = array![[0.4, -0.2]];
    let (alpha, m, _) = label_attention_forward(&single, &la_head(array![[1.0, 5.0], [-3.0, 2.0]])).unwrap();
    assert!(alpha.iter().all(|&a| a == 1.0));
    assert_eq!(m.row(0), single.row(0));
    assert_eq!(m.row(1), single.row(0));

    let h = array![[1.0, 0.0], [0.0, 1.0]];
    let (alpha, m, _) = label_attention_forward(&h, &la_head(array![[1.0, 0.0]])).unwrap();
    assert_abs_diff_eq!(alpha[[0, 0]], 0.731_058_578_630_004_9, epsilon = 1e-12);
    assert_abs_diff_eq!(alpha[[1, 0]], 0.268_941_421_369_995_1, epsilon = 1e-12);
    assert_abs_diff_eq!(m[[0, 0]], 0.731_058_578_630_004_9, epsilon = 1e-12);
    assert_abs_diff_eq!(m[[0, 1]], 0.268_941_421_369_995_1, epsilon = 1e-12);

    assert!(label_attention_forward(&Array2::zeros((0, 2)), &la_head(Array2::zeros((1, 2)))).is_err());
    assert!(label_attention_forward(&h, &la_head(Array2::zeros((1, 3)))).is_err());
}

proptest! {
    #[test]
    fn attention_columns_normalised_and_shift_invariant(
        rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 1..8),
        w in proptest::collection::vec(-2.0f64..2.0, 6),
        shift in -5.0f64..5.0,
    ) {
        // The last column is shared by every row, so moving w_k along it
        // shifts all scores of label k by the same constant.
        let t = rows.len();
        let h = Array2::from_shape_fn((t, 3), |(i, j)| if j == 2 { 1.0 } else { rows[i][j] });
        let att = Array2::from_shape_vec((2, 3), w).unwrap();
        let (alpha, _, _) = label_attention_forward(&h, &la_head(att.clone())).unwrap();
        for col in alpha.columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        let mut shifted = att;
        shifted.column_mut(2).mapv_inplace(|x| x + shift);
        let (alpha2, _, _) = label_attention_forward(&h, &la_head(shifted)).unwrap();
        for (a, b) in alpha.iter().zip(alpha2.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_invariant_under_sigmoid(scores in proptest::collection::vec(-15.0f64..15.0, 1..30)) {
        let probs: Vec<f64> = scores.iter().map(|&s| crate::nn::sigmoid(s)).collect();
        prop_assert_eq!(rank_scores(&scores, scores.len()), rank_scores(&probs, scores.len()));
    }
}

#[test]
fn bce_cases() {
    assert!(weighted_bce_loss(&[1.0, 0.0], &[1.0, 0.0], 1.0) < 1e-11);
    assert_abs_diff_eq!(weighted_bce_loss(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0], 0.7), 0.7 * 2f64.ln(), epsilon = 1e-15);
    let y_hat = [0.3, 0.8, 0.1];
    let y = [1.0, 1.0, 0.0];
    assert_eq!(weighted_bce_loss(&y_hat, &y, 2.0), 2.0 * weighted_bce_loss(&y_hat, &y, 1.0));
}

fn toy_params(kind: HeadKind, seed: u64) -> ClassifierParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ClassifierParams::init(kind, 7, 5, 3, 1, 2, &mut rng);
    // Move away from the identity/zero initialisation so every tensor matters.
    for (_, t) in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.3 * crate::nn::normal2(1, 1, 1.0, &mut rng)[[0, 0]];
        }
    }
    p
}

fn forward_loss(p: &ClassifierParams, batch: &[Instance<'_>]) -> f64 {
    let mut total = 0.0;
    for inst in batch {
        let probs: Vec<f64> = scores_for_ids(p, inst.ids).unwrap().iter().map(|&s| crate::nn::sigmoid(s)).collect();
        let mut y = vec![0.0; probs.len()];
        for &l in inst.labels {
            y[l] = 1.0;
        }
        total += weighted_bce_loss(&probs, &y, inst.weight);
    }
    total / batch.len() as f64
}

#[test]
fn gradients_match_finite_differences() {
    // T = 4 rows: [CLS], two tokens, [SEP]; K = 3; d = 5.
    let ids_a = vec![1, 3, 4, 2];
    let ids_b = vec![1, 5, 3, 2];
    let la: LabelSet = [0, 2].into_iter().collect();
    let lb: LabelSet = [1].into_iter().collect();
    for kind in [HeadKind::Vanilla, HeadKind::LabelAttention] {
        let params = toy_params(kind, 11);
        let batch = [
            Instance { ids: &ids_a, labels: &la, weight: 1.0 },
            Instance { ids: &ids_b, labels: &lb, weight: 0.5 },
        ];
        let (loss, grads) = gradients(&params, &batch).unwrap();
        assert_abs_diff_eq!(loss, forward_loss(&params, &batch), epsilon = 1e-12);
        let numeric = finite_difference(&params, 1e-4, |p| forward_loss(p, &batch));
        for (t, fd) in grads.tensors().iter().zip(&numeric) {
            let err = relative_error(t.data, fd);
            assert!(err <= 1e-5, "{kind:?} {}: relative error {err:e}", t.name);
        }
    }
}

#[test]
fn bias_gradient_vanishes_at_perfect_fit() {
    for kind in [HeadKind::Vanilla, HeadKind::LabelAttention] {
        let mut p = toy_params(kind, 3);
        let labels: LabelSet = [1].into_iter().collect();
        let bias = array![-60.0, 60.0, -60.0];
        match &mut p.head {
            Head::Vanilla(h) => {
                h.weight.fill(0.0);
                h.bias = bias;
            }
            Head::LabelAttention(h) => {
                h.weight.fill(0.0);
                h.bias = bias;
            }
        }
        let ids = [1, 3, 2];
        let (_, g) = gradients(&p, &[Instance { ids: &ids, labels: &labels, weight: 1.0 }]).unwrap();
        let bias_grad = g.tensors().into_iter().find(|t| t.name == "head.bias").unwrap();
        assert!(bias_grad.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradients_scale_with_lambda() {
    let p = toy_params(HeadKind::LabelAttention, 5);
    let ids = [1, 4, 3, 2];
    let labels: LabelSet = [2].into_iter().collect();
    let (_, g1) = gradients(&p, &[Instance { ids: &ids, labels: &labels, weight: 1.0 }]).unwrap();
    let (_, g3) = gradients(&p, &[Instance { ids: &ids, labels: &labels, weight: 3.0 }]).unwrap();
    for (a, b) in g1.tensors().iter().zip(g3.tensors()) {
        for (x, y) in a.data.iter().zip(b.data) {
            assert_abs_diff_eq!(3.0 * x, y, epsilon = 1e-14);
        }
    }
}

#[test]
fn ranking_rules() {
    assert_eq!(rank_scores(&[0.9, 0.1, 0.5], 2), vec![0, 2]);
    assert_eq!(rank_scores(&[0.2, 0.7, 0.7], 2), vec![1, 2]);
    let mut all = rank_scores(&[0.3, 0.1, 0.2], 3);
    all.sort();
    assert_eq!(all, vec![0, 1, 2]);
}

/// Forty examples over four labels, each label signalled by its own word.
fn separable() -> Dataset {
    let words = ["alpha", "bravo", "charlie", "delta"];
    let rows = (0..40).map(|i| {
        let l = i % 4;
        let text = format!("{} item {} filler", words[l], i % 7);
        (Example::new(format!("e{i}"), text, "plain words", []), vec![format!("L{l}")])
    });
    Dataset::from_named(rows).unwrap()
}

fn fast_cfg(seed: u64) -> ClfTrainConfig {
    ClfTrainConfig {
        learning_rate: 0.05,
        epochs: 30,
        batch_size: 8,
        dim: 8,
        seed,
        ..Default::default()
    }
}

#[test]
fn separable_toy_reaches_perfect_precision() {
    let d = separable();
    let aug = AugmentedDataset::from_dataset(&d);
    for kind in [HeadKind::Vanilla, HeadKind::LabelAttention] {
        let (model, history) = train(&aug, kind, &fast_cfg(1), None).unwrap();
        assert!(history.train_loss.last().unwrap() < &history.train_loss[0]);
        let mut p1 = 0.0;
        for e in d.examples() {
            let top = predict_topk(&model, e, 1).unwrap();
            let rp = RankedPrediction::new(top.iter().map(|x| x.0).collect(), e.labels.clone()).unwrap();
            p1 += precision_at_k(&rp, 1).unwrap();
        }
        assert_eq!(p1 / d.len() as f64, 1.0, "{kind:?}");
        assert!(predict_topk(&model, &d.examples()[0], 5).is_err());
        assert_eq!(predict_topk(&model, &d.examples()[0], 4).unwrap().len(), 4);
    }
}

#[test]
fn zero_weight_examples_do_not_change_training() {
    let d = separable();
    let base = AugmentedDataset::from_dataset(&d);
    let mut with_zero = base.clone();
    with_zero.examples.push(crate::gen_aug::AugmentedExample {
        example: Example::new("synthetic", "unrelated novel words", "", [1]),
        weight: 0.0,
        provenance: Provenance::Gda,
    });
    let (a, _) = train(&base, HeadKind::LabelAttention, &fast_cfg(2), None).unwrap();
    let (b, _) = train(&with_zero, HeadKind::LabelAttention, &fast_cfg(2), None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_is_deterministic_and_checkpoints_roundtrip() {
    let d = separable();
    let aug = AugmentedDataset::from_dataset(&d);
    let (a, _) = train(&aug, HeadKind::Vanilla, &fast_cfg(4), Some(&d)).unwrap();
    let (b, h) = train(&aug, HeadKind::Vanilla, &fast_cfg(4), Some(&d)).unwrap();
    assert_eq!(h.validation_loss.len(), 30);
    let bits = |m: &ClassifierModel| -> Vec<u64> {
        m.params.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));

    let bytes = a.to_checkpoint().unwrap().to_bytes().unwrap();
    let ck = crate::checkpoint::Checkpoint::from_bytes(&bytes).unwrap();
    let back = ClassifierModel::from_checkpoint(&ck).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_checkpoint().unwrap().to_bytes().unwrap(), bytes);
}

#[test]
fn empty_training_data_rejected() {
    let d = separable();
    let mut aug = AugmentedDataset::from_dataset(&d);
    for a in &mut aug.examples {
        a.weight = 0.0;
    }
    assert!(matches!(train(&aug, HeadKind::Vanilla, &fast_cfg(0), None), Err(Error::Empty(_))));
}
