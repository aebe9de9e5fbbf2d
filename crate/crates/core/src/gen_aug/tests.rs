use approx::assert_abs_diff_eq;
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::nn::{finite_difference, relative_error, OptimizerKind, Parameters};
use crate::textsim::{bleu, tokenize, TokenSequence};
use crate::vocab::TokenVocab;

fn seq(s: &str) -> TokenSequence {
    tokenize(s)
}

fn toy_model(seed: u64, shape: GenShape) -> GeneratorModel {
    let words = ["red", "blue", "cup", "mug", "tea", "big"];
    let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(words.iter().map(|s| s.to_string())).collect();
    let shape = GenShape { vocab: tokens.len(), ..shape };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GeneratorModel {
        vocab: TokenVocab::from(tokens),
        params: GenParams::init(shape, &mut rng),
        config: GenTrainConfig::default(),
        epochs_trained: 0,
    }
}

fn small_shape() -> GenShape {
    GenShape { vocab: 0, dim: 4, ff_dim: 6, layers: 2, max_positions: 16 }
}

#[test]
fn gradients_match_finite_differences() {
    let mut model = toy_model(7, small_shape());
    // Push every tensor off its initial scale so no branch is negligible.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (_, t) in model.params.tensors_mut() {
        let noise = crate::nn::normal2(1, t.len(), 0.3, &mut rng);
        for (v, n) in t.iter_mut().zip(noise.iter()) {
            *v += n;
        }
    }
    let pairs = [
        model.encode_pair(seq("red cup").as_slice(), seq("blue mug tea").as_slice()),
        model.encode_pair(seq("big tea mug").as_slice(), seq("red cup").as_slice()),
    ];
    let batch: Vec<&EncodedPair> = pairs.iter().collect();
    let tokens: usize = pairs.iter().map(EncodedPair::target_len).sum();
    let loss_fn = |p: &GenParams| pairs.iter().map(|e| sequence_loss(p, &e.ids, e.sep_pos)).sum::<f64>() / tokens as f64;
    let (loss, grads) = gradients(&model.params, &batch).unwrap();
    assert_abs_diff_eq!(loss, loss_fn(&model.params), epsilon = 1e-12);
    let numeric = finite_difference(&model.params, 1e-4, loss_fn);
    for (t, fd) in grads.tensors().iter().zip(&numeric) {
        let err = relative_error(t.data, fd);
        assert!(err <= 1e-5, "{}: relative error {err:e}", t.name);
    }
}

#[test]
fn incremental_state_matches_full_forward() {
    let model = toy_model(3, small_shape());
    let ids = [1, 4, 6, 3, 5, 5, 7];
    let full = forward_logits(&model.params, &ids);
    let mut state = DecodeState::new(&model.params);
    for (t, &id) in ids.iter().enumerate() {
        let step = state.push(&model.params, id);
        for (a, b) in step.iter().zip(full.row(t)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn uniform_model_has_perplexity_v() {
    let mut model = toy_model(1, small_shape());
    model.params.wout.fill(0.0);
    model.params.bout.fill(0.0);
    let pairs = vec![(seq("red cup"), seq("blue mug")), (seq("tea"), seq("big big cup unseen"))];
    let ppl = perplexity(&model, &pairs).unwrap();
    assert_abs_diff_eq!(ppl, model.vocab.len() as f64, epsilon = 1e-9);
    assert!(matches!(perplexity(&model, &[]), Err(Error::Empty(_))));
}

fn memo_cfg() -> GenTrainConfig {
    GenTrainConfig {
        learning_rate: 0.01,
        epochs: 150,
        batch_size: 4,
        dim: 16,
        ff_dim: 32,
        layers: 1,
        max_positions: 32,
        min_token_freq: 1,
        ..Default::default()
    }
}

#[test]
fn untrained_loss_near_log_vocab() {
    let pairs = vec![(seq("a red cup of tea"), seq("one blue mug of coffee"))];
    let cfg = GenTrainConfig { epochs: 0, ..memo_cfg() };
    let (model, _) = fit_generator(&pairs, &cfg, None).unwrap();
    let ln_v = (model.vocab.len() as f64).ln();
    let loss = perplexity(&model, &pairs).unwrap().ln();
    assert!((loss - ln_v).abs() < 0.05 * ln_v, "{loss} vs {ln_v}");
}

#[test]
fn single_pair_is_memorised() {
    let pairs = vec![(seq("stainless steel travel mug"), seq("insulated steel mug for travel with lid"))];
    let (model, history) = fit_generator(&pairs, &memo_cfg(), None).unwrap();
    assert!(history.train_loss.last().unwrap() < &0.01);
    assert!(perplexity(&model, &pairs).unwrap() < 1.01);
    let out = generate(&model, "stainless steel travel mug", &DecodeConfig::default()).unwrap();
    assert_eq!(out, "insulated steel mug for travel with lid");
    let score = bleu(&seq(&out), &pairs[0].1, 4);
    assert!(score >= 0.95);
    assert_eq!(model.epochs_trained, 150);
}

#[test]
fn full_batch_descent_is_monotone() {
    let pairs = vec![
        (seq("red cup"), seq("blue mug tea")),
        (seq("big tea mug"), seq("red cup")),
        (seq("blue tea"), seq("big red mug")),
    ];
    let cfg = GenTrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        batch_size: 3,
        epochs: 60,
        ..memo_cfg()
    };
    let (_, history) = fit_generator(&pairs, &cfg, Some(&pairs)).unwrap();
    // With one full batch per epoch the recorded loss is the pre-step loss.
    for w in history.train_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{w:?}");
    }
    assert!(history.train_loss.last().unwrap() < &history.train_loss[0]);
    assert_eq!(history.validation_loss.len(), 60);
}

#[test]
fn training_is_deterministic_and_validates_input() {
    let pairs = vec![(seq("red cup"), seq("blue mug")), (seq("tea"), seq("big cup"))];
    let cfg = GenTrainConfig { epochs: 5, ..memo_cfg() };
    let (a, ha) = fit_generator(&pairs, &cfg, None).unwrap();
    let (b, hb) = fit_generator(&pairs, &cfg, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert!(matches!(fit_generator(&[], &cfg, None), Err(Error::Empty(_))));
    let bad = GenTrainConfig { learning_rate: 0.0, ..cfg };
    assert!(fit_generator(&pairs, &bad, None).is_err());
}

#[test]
fn min_frequency_maps_rare_words_to_unknown() {
    let pairs = vec![(seq("cup cup rare"), seq("cup mug mug"))];
    let cfg = GenTrainConfig { epochs: 0, min_token_freq: 2, ..memo_cfg() };
    let (model, _) = fit_generator(&pairs, &cfg, None).unwrap();
    assert!(model.vocab.get("rare").is_none());
    assert!(model.vocab.get("cup").is_some());
    assert_eq!(model.vocab.id("rare"), model.unk());
}

#[test]
fn repetition_penalty_semantics() {
    let logits = array![2.0, -1.0, 0.5, 3.0];
    let plain = DecodeConfig { temperature: 0.5, ..Default::default() };
    let adjusted = adjust_logits(&logits, &[0, 1, 0], &plain);
    assert_eq!(adjusted, logits.mapv(|l| l / 0.5));
    let penal = DecodeConfig { temperature: 1.0, repetition_penalty: 2.0, ..Default::default() };
    assert_eq!(adjust_logits(&logits, &[0, 1, 0], &penal), array![1.0, -2.0, 0.5, 3.0]);
}

#[test]
fn width_one_beam_equals_greedy() {
    for seed in 0..5 {
        let model = toy_model(seed, small_shape());
        for src in ["red cup", "big blue tea mug", ""] {
            let s = seq(src);
            let cfg = DecodeConfig { beam_width: 1, max_len: 8, ..Default::default() };
            assert_eq!(generate_ids(&model, s.as_slice(), &cfg).unwrap(), greedy_ids(&model, s.as_slice(), &cfg));
            let penal = DecodeConfig { repetition_penalty: 1.7, ..cfg };
            assert_eq!(generate_ids(&model, s.as_slice(), &penal).unwrap(), greedy_ids(&model, s.as_slice(), &penal));
        }
    }
}

#[test]
fn decoding_is_deterministic_and_never_emits_specials() {
    let model = toy_model(11, small_shape());
    let cfg = DecodeConfig { max_len: 6, ..Default::default() };
    let a = beam_search(&model, seq("red cup").as_slice(), &cfg).unwrap();
    let b = beam_search(&model, seq("red cup").as_slice(), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(!a.is_empty() && a.len() <= 10);
    for f in &a {
        assert!(f.tokens.len() <= 6);
        assert!(f.tokens.iter().all(|&t| !model.is_special(t)));
    }
    for w in a.windows(2) {
        assert!(w[0].normalized >= w[1].normalized);
    }
}

#[test]
fn eos_first_gives_empty_text_and_length_budget_truncates() {
    let mut model = toy_model(2, small_shape());
    let eos = model.eos();
    model.params.bout[eos] = 100.0;
    assert_eq!(generate(&model, "red cup", &DecodeConfig::default()).unwrap(), "");

    model.params.bout[eos] = -100.0;
    let tea = model.vocab.id("tea");
    model.params.bout[tea] = 100.0;
    let cfg = DecodeConfig { max_len: 5, ..Default::default() };
    assert_eq!(generate(&model, "red", &cfg).unwrap(), "tea tea tea tea tea");
    // The positional table also bounds the output.
    let long = DecodeConfig { max_len: 1000, ..Default::default() };
    let out = generate(&model, "red", &long).unwrap();
    assert_eq!(out.split(' ').count(), 16 - 3);
}

#[test]
fn invalid_decode_config_rejected() {
    let model = toy_model(0, small_shape());
    for cfg in [
        DecodeConfig { beam_width: 0, ..Default::default() },
        DecodeConfig { temperature: 0.0, ..Default::default() },
        DecodeConfig { repetition_penalty: 0.5, ..Default::default() },
    ] {
        assert!(generate(&model, "red", &cfg).is_err());
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let pairs = vec![(seq("red cup"), seq("blue mug")), (seq("tea"), seq("big cup"))];
    let (model, _) = fit_generator(&pairs, &GenTrainConfig { epochs: 3, ..memo_cfg() }, None).unwrap();
    let bytes = model.to_checkpoint().unwrap().to_bytes().unwrap();
    let ck = crate::checkpoint::Checkpoint::from_bytes(&bytes).unwrap();
    let back = GeneratorModel::from_checkpoint(&ck).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_checkpoint().unwrap().to_bytes().unwrap(), bytes);

    let mut wrong = ck.clone();
    wrong.kind = "xmcaug-classifier".into();
    assert!(GeneratorModel::from_checkpoint(&wrong).is_err());
}

#[test]
fn long_pairs_are_truncated_to_the_position_table() {
    let model = toy_model(0, small_shape());
    let src: Vec<String> = (0..40).map(|_| "red".to_string()).collect();
    let e = model.encode_pair(&src, &src);
    assert_eq!(e.ids.len(), 16);
    assert_eq!(e.sep_pos, 7);
    assert_eq!(*e.ids.last().unwrap(), model.eos());
}
