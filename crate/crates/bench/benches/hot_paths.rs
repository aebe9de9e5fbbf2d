use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xmcaug::classifier::{self, ClassifierParams, HeadKind, Instance};
use xmcaug::corpus::{LabelSet, PropensityModel};
use xmcaug::gen_aug::{self, generate_ids, DecodeConfig, EncodedPair, GenParams, GenShape, GenTrainConfig, GeneratorModel, SPECIALS};
use xmcaug::metrics::{evaluate, RankedPrediction};
use xmcaug::synth::pseudo_word;
use xmcaug::textsim::{similarity_ratio, tokenize};
use xmcaug::vocab::TokenVocab;

fn text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| pseudo_word(rng.random_range(0..300))).collect::<Vec<_>>().join(" ")
}

fn similarity(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, b) = (text(&mut rng, 60), text(&mut rng, 60));
    c.bench_function("similarity_ratio/60 words", |bch| bch.iter(|| similarity_ratio(&a, &b)));
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = 1000;
    let preds: Vec<RankedPrediction> = (0..2000)
        .map(|_| {
            let mut ranked: Vec<usize> = (0..k).collect();
            ranked.shuffle(&mut rng);
            ranked.truncate(5);
            let gold: LabelSet = (0..4).map(|_| rng.random_range(0..k)).collect();
            RankedPrediction::new(ranked, gold).unwrap()
        })
        .collect();
    let pm = PropensityModel::unit(k);
    c.bench_function("evaluate/2000 examples", |bch| bch.iter(|| evaluate(&preds, &pm, &[1, 3, 5]).unwrap()));
}

fn classifier_gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids: Vec<Vec<usize>> = (0..32).map(|_| (0..64).map(|_| rng.random_range(0..2000)).collect()).collect();
    let labels: Vec<LabelSet> = (0..32).map(|_| (0..3).map(|_| rng.random_range(0..200)).collect()).collect();
    let batch: Vec<Instance<'_>> = ids
        .iter()
        .zip(&labels)
        .map(|(i, l)| Instance { ids: i, labels: l, weight: 1.0 })
        .collect();
    for kind in [HeadKind::Vanilla, HeadKind::LabelAttention] {
        let params = ClassifierParams::init(kind, 2000, 64, 200, 1, 2, &mut rng);
        c.bench_function(&format!("classifier gradients/{}", kind.name()), |bch| {
            bch.iter(|| classifier::gradients(&params, &batch).unwrap())
        });
    }
}

fn generator(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words: Vec<String> = (0..500).map(pseudo_word).collect();
    let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(words.iter().cloned()).collect();
    let shape = GenShape { vocab: tokens.len(), dim: 64, ff_dim: 128, layers: 2, max_positions: 128 };
    let model = GeneratorModel {
        vocab: TokenVocab::from(tokens),
        params: GenParams::init(shape, &mut rng),
        config: GenTrainConfig::default(),
        epochs_trained: 0,
    };
    let pairs: Vec<EncodedPair> = (0..16)
        .map(|_| model.encode_pair(tokenize(&text(&mut rng, 20)).as_slice(), tokenize(&text(&mut rng, 20)).as_slice()))
        .collect();
    let batch: Vec<&EncodedPair> = pairs.iter().collect();
    c.bench_function("generator gradients/16 pairs", |bch| {
        bch.iter(|| gen_aug::gradients(&model.params, &batch).unwrap())
    });
    let src = tokenize(&text(&mut rng, 20));
    let cfg = DecodeConfig { max_len: 30, ..DecodeConfig::default() };
    c.bench_function("beam search/width 10", |bch| {
        bch.iter_batched(|| src.clone(), |s| generate_ids(&model, s.as_slice(), &cfg).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, similarity, metrics, classifier_gradients, generator);
criterion_main!(benches);
