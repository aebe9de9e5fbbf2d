//! Desk-scale experiments on the synthetic corpora, shared by the examples
//! and the acceptance harness.

use serde::{Deserialize, Serialize};

use crate::classifier::{rank_dataset, train, ClfTrainConfig, HeadKind};
use crate::corpus::{compute_propensities, label_frequencies, PairConfig, DEFAULT_MEDIA_LABELS};
use crate::error::Result;
use crate::gen_aug::{
    build_augmented_dataset, run_gda, AugmentedDataset, DecodeConfig, GdaConfig, GenTrainConfig, SourceSelection,
};
use crate::metrics::{evaluate, Metric, MetricReport};
use crate::synth::{keyword_task, zipf_corpus, KeywordTaskConfig, ZipfConfig};
use crate::textsim::tokenize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailConfig {
    pub corpus: ZipfConfig,
    pub classifier: ClfTrainConfig,
    pub gda: GdaConfig,
    pub lambda: f64,
    pub propensity_a: f64,
    pub propensity_b: f64,
}

impl Default for LongTailConfig {
    fn default() -> Self {
        LongTailConfig {
            corpus: ZipfConfig::default(),
            classifier: ClfTrainConfig {
                learning_rate: 0.01,
                epochs: 8,
                batch_size: 32,
                dim: 32,
                ..ClfTrainConfig::for_head(HeadKind::LabelAttention)
            },
            gda: GdaConfig {
                pairs: PairConfig { max_pairs_per_group: 6, ..Default::default() },
                train: GenTrainConfig {
                    learning_rate: 3e-3,
                    epochs: 12,
                    batch_size: 16,
                    dim: 64,
                    ff_dim: 128,
                    layers: 1,
                    max_positions: 96,
                    min_token_freq: 2,
                    ..Default::default()
                },
                decode: DecodeConfig { beam_width: 10, max_len: 40, ..Default::default() },
                sources: SourceSelection::TailBelow(10),
                max_words: 40,
            },
            lambda: 0.5,
            propensity_a: 0.55,
            propensity_b: 1.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LongTailTrial {
    pub baseline: MetricReport,
    pub augmented: MetricReport,
    pub pairs: usize,
    pub generated: usize,
    pub generator_loss: f64,
    /// Share of generated texts containing a keyword of their source's
    /// rarest label.
    pub keyword_fidelity: f64,
    pub samples: Vec<(String, String)>,
}

impl LongTailTrial {
    pub fn psp5_gain(&self) -> f64 {
        self.augmented.get(Metric::Psp, 5).unwrap_or(0.0) - self.baseline.get(Metric::Psp, 5).unwrap_or(0.0)
    }
}

/// Label-attention classifier with and without generative augmentation on
/// one draw of the Zipf corpus. `seed` drives the corpus, the generator and
/// the classifier.
pub fn long_tail_trial(cfg: &LongTailConfig, seed: u64) -> Result<LongTailTrial> {
    let corpus = zipf_corpus(&ZipfConfig { seed, ..cfg.corpus.clone() })?;
    let freq = label_frequencies(&corpus.train);
    let pm = compute_propensities(&freq, corpus.train.len(), cfg.propensity_a, cfg.propensity_b)?;
    let clf = ClfTrainConfig { seed, ..cfg.classifier.clone() };
    let score = |aug: &AugmentedDataset| -> Result<MetricReport> {
        let (m, _) = train(aug, HeadKind::LabelAttention, &clf, None)?;
        evaluate(&rank_dataset(&m, &corpus.test, 5)?, &pm, &[1, 3, 5])
    };
    let baseline = score(&AugmentedDataset::from_dataset(&corpus.train))?;
    let gda = GdaConfig {
        train: GenTrainConfig { seed, ..cfg.gda.train.clone() },
        pairs: PairConfig { seed, ..cfg.gda.pairs.clone() },
        ..cfg.gda.clone()
    };
    let out = run_gda(&corpus.train, &DEFAULT_MEDIA_LABELS, &gda)?;
    let idx = corpus.train.id_index();
    let faithful = out
        .generated
        .iter()
        .filter(|(src, text)| {
            let e = &corpus.train.examples()[idx[src.as_str()]];
            let rare = e.labels.iter().copied().min_by_key(|&l| freq[l]).expect("labelled source");
            tokenize(text).iter().any(|t| corpus.grammars[rare].keywords.contains(t))
        })
        .count();
    let augmented = score(&build_augmented_dataset(&corpus.train, &out.generated, cfg.lambda)?)?;
    Ok(LongTailTrial {
        baseline,
        augmented,
        pairs: out.pairs.len(),
        generated: out.generated.len(),
        generator_loss: out.history.train_loss.last().copied().unwrap_or(f64::NAN),
        keyword_fidelity: faithful as f64 / out.generated.len().max(1) as f64,
        samples: out.generated.iter().take(2).cloned().collect(),
    })
}

/// P@5 of the vanilla and label-attention heads on one keyword task draw.
pub fn head_comparison(task: &KeywordTaskConfig, clf: &ClfTrainConfig, seed: u64) -> Result<(f64, f64)> {
    let (train_set, test) = keyword_task(&KeywordTaskConfig { seed, ..task.clone() })?;
    let aug = AugmentedDataset::from_dataset(&train_set);
    let pm = crate::corpus::PropensityModel::unit(train_set.num_labels());
    let mut p5 = [0.0; 2];
    for (slot, kind) in [HeadKind::Vanilla, HeadKind::LabelAttention].into_iter().enumerate() {
        let (m, _) = train(&aug, kind, &ClfTrainConfig { seed, ..clf.clone() }, None)?;
        let r = evaluate(&rank_dataset(&m, &test, 5)?, &pm, &[5])?;
        p5[slot] = r.get(Metric::Precision, 5).unwrap_or(0.0);
    }
    Ok((p5[0], p5[1]))
}

/// Sample mean and standard deviation (n − 1 in the denominator).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}
