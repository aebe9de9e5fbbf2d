use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gradients, sequence_loss, EncodedPair, GenParams, GenShape, GeneratorModel, SPECIALS};
use crate::corpus::{build_input_text, Dataset, PairSet};
use crate::error::{Error, Result};
use crate::nn::{Optimizer, OptimizerKind, Parameters};
use crate::textsim::TokenSequence;
use crate::vocab::TokenVocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub dim: usize,
    pub ff_dim: usize,
    pub layers: usize,
    /// Length of the positional table; bounds source + target + 3.
    pub max_positions: usize,
    /// Tokens seen fewer times than this map to the unknown token.
    pub min_token_freq: usize,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        GenTrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            dim: 64,
            ff_dim: 128,
            layers: 2,
            max_positions: 512,
            min_token_freq: 2,
        }
    }
}

impl GenTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("generator learning rate must be positive"));
        }
        if self.batch_size == 0 || self.dim == 0 || self.ff_dim == 0 || self.layers == 0 {
            return Err(Error::invalid("batch size, dims and layers must be at least 1"));
        }
        if self.dim > 128 || self.layers > 2 {
            return Err(Error::invalid("generator is limited to width 128 and 2 layers"));
        }
        if self.max_positions < 5 {
            return Err(Error::invalid("max_positions must be at least 5"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

/// Source/target token sequences for every pair, truncated to `max_words`.
pub fn pair_sequences(dataset: &Dataset, pairs: &PairSet, max_words: usize) -> Result<Vec<(TokenSequence, TokenSequence)>> {
    let text = |id: &str| {
        dataset
            .get(id)
            .map(|e| build_input_text(e, max_words))
            .ok_or_else(|| Error::UnknownSourceId(id.to_string()))
    };
    pairs
        .pairs
        .iter()
        .map(|(s, t)| Ok((text(s)?, text(t)?)))
        .collect()
}

fn encode_all(model: &GeneratorModel, pairs: &[(TokenSequence, TokenSequence)]) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|(s, t)| model.encode_pair(s.as_slice(), t.as_slice()))
        .collect()
}

fn mean_loss(params: &GenParams, encoded: &[EncodedPair]) -> Result<f64> {
    let tokens: usize = encoded.iter().map(EncodedPair::target_len).sum();
    if tokens == 0 {
        return Err(Error::Empty("evaluation pairs".into()));
    }
    let total: f64 = encoded.iter().map(|e| sequence_loss(params, &e.ids, e.sep_pos)).sum();
    Ok(total / tokens as f64)
}

/// Teacher-forced training on (source, target) pairs. The loss is the mean
/// cross-entropy over target tokens and EOS; source positions are masked.
pub fn fit_generator(
    pairs: &[(TokenSequence, TokenSequence)],
    cfg: &GenTrainConfig,
    validation: Option<&[(TokenSequence, TokenSequence)]>,
) -> Result<(GeneratorModel, GenHistory)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("pair set".into()));
    }
    let vocab = TokenVocab::build(
        pairs.iter().flat_map(|(s, t)| s.iter().chain(t.iter()).map(String::as_str)),
        cfg.min_token_freq,
        &SPECIALS,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = GenShape {
        vocab: vocab.len(),
        dim: cfg.dim,
        ff_dim: cfg.ff_dim,
        layers: cfg.layers,
        max_positions: cfg.max_positions,
    };
    let mut model = GeneratorModel {
        vocab,
        params: GenParams::init(shape, &mut rng),
        config: cfg.clone(),
        epochs_trained: 0,
    };
    let encoded = encode_all(&model, pairs);
    let encoded_val = validation.map(|v| encode_all(&model, v));

    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, 0.0);
    let mut history = GenHistory::default();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let items: Vec<&EncodedPair> = batch.iter().map(|&i| &encoded[i]).collect();
            let n: usize = items.iter().map(|e| e.target_len()).sum();
            let (loss, grads) = gradients(&model.params, &items)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("generator loss at epoch {epoch}")));
            }
            total += loss * n as f64;
            tokens += n;
            opt.step(&mut model.params, &grads);
        }
        history.train_loss.push(total / tokens as f64);
        if let Some(v) = &encoded_val {
            history.validation_loss.push(mean_loss(&model.params, v)?);
        }
        model.epochs_trained += 1;
        log::debug!("generator epoch {epoch}: loss {:.6}", history.train_loss[epoch]);
    }
    model.params.check_finite()?;
    Ok((model, history))
}

/// `exp` of the mean target-token cross-entropy; unknown words map to UNK.
pub fn perplexity(model: &GeneratorModel, pairs: &[(TokenSequence, TokenSequence)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs".into()));
    }
    Ok(mean_loss(&model.params, &encode_all(model, pairs))?.exp())
}
