use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{gradients, Instance};
use super::{token_ids, weighted_bce_loss, ClassifierModel, ClassifierParams, HeadKind, CLS, SEP, UNK};
use crate::corpus::{build_input_text, Dataset, Example, LabelSet, DEFAULT_MAX_WORDS};
use crate::error::{Error, Result};
use crate::gen_aug::AugmentedDataset;
use crate::nn::{sigmoid, Optimizer, OptimizerKind};
use crate::vocab::TokenVocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub weight_decay: f64,
    /// Embedding width `d`.
    pub dim: usize,
    pub max_words: usize,
    pub min_token_freq: usize,
}

impl Default for ClfTrainConfig {
    fn default() -> Self {
        ClfTrainConfig {
            learning_rate: 1e-6,
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            weight_decay: 0.0,
            dim: 64,
            max_words: DEFAULT_MAX_WORDS,
            min_token_freq: 1,
        }
    }
}

impl ClfTrainConfig {
    /// Fine-tuning learning rate used for each head.
    pub fn for_head(kind: HeadKind) -> Self {
        let learning_rate = match kind {
            HeadKind::Vanilla => 1e-6,
            HeadKind::LabelAttention => 5e-6,
        };
        ClfTrainConfig {
            learning_rate,
            ..Default::default()
        }
    }

    /// Epoch budget by training fraction: 10 for 100% and 50%, 40 for 5%,
    /// 100 for 1% (and anything smaller).
    pub fn epochs_for_fraction(fraction: f64) -> usize {
        if fraction >= 0.5 - 1e-9 {
            10
        } else if fraction >= 0.05 - 1e-9 {
            40
        } else {
            100
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::invalid("epochs, batch size and dim must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

/// An example paired with its loss weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedExample<'a> {
    pub example: &'a Example,
    pub weight: f64,
}

fn validation_loss(model: &ClassifierModel, validation: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for e in validation.examples() {
        let probs: Vec<f64> = model.scores(e)?.iter().map(|&s| sigmoid(s)).collect();
        total += weighted_bce_loss(&probs, &e.label_vector(model.num_labels()), 1.0);
    }
    Ok(total / validation.len().max(1) as f64)
}

/// Mini-batch training of the weighted loss. Zero-weight examples are left
/// out entirely (vocabulary, batching and all), so they cannot influence
/// the parameter trajectory.
pub fn train(
    data: &AugmentedDataset,
    kind: HeadKind,
    cfg: &ClfTrainConfig,
    validation: Option<&Dataset>,
) -> Result<(ClassifierModel, TrainHistory)> {
    cfg.validate()?;
    let active: Vec<WeightedExample<'_>> = data
        .examples
        .iter()
        .filter(|a| a.weight > 0.0)
        .map(|a| WeightedExample {
            example: &a.example,
            weight: a.weight,
        })
        .collect();
    if active.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    let num_labels = data.label_names.len();
    let tokens: Vec<_> = active
        .iter()
        .map(|w| build_input_text(w.example, cfg.max_words))
        .collect();
    let vocab = TokenVocab::build(
        tokens.iter().flat_map(|t| t.iter().map(String::as_str)),
        cfg.min_token_freq,
        &[UNK, CLS, SEP],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ClassifierParams::init(
        kind,
        vocab.len(),
        cfg.dim,
        num_labels,
        vocab.id(CLS),
        vocab.id(SEP),
        &mut rng,
    );
    let mut model = ClassifierModel {
        vocab,
        params,
        label_names: data.label_names.clone(),
        max_words: cfg.max_words,
        config: cfg.clone(),
    };
    let ids: Vec<Vec<usize>> = tokens
        .iter()
        .map(|t| token_ids(t, &model.vocab, &model.params.encoder))
        .collect();
    let labels: Vec<&LabelSet> = active.iter().map(|w| &w.example.labels).collect();

    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..active.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let items: Vec<Instance<'_>> = batch
                .iter()
                .map(|&i| Instance {
                    ids: &ids[i],
                    labels: labels[i],
                    weight: active[i].weight,
                })
                .collect();
            let (loss, grads) = gradients(&model.params, &items)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut model.params, &grads);
        }
        history.train_loss.push(epoch_loss / active.len() as f64);
        if let Some(v) = validation {
            history.validation_loss.push(validation_loss(&model, v)?);
        }
        log::debug!("classifier epoch {epoch}: loss {:.6}", history.train_loss[epoch]);
    }
    Ok((model, history))
}
