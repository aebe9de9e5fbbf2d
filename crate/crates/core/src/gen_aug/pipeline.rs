use serde::{Deserialize, Serialize};

use super::decode::{generate_batch, DecodeConfig};
use super::model::GeneratorModel;
use super::train::{fit_generator, pair_sequences, GenHistory, GenTrainConfig};
use crate::corpus::{build_input_text, filter_media_labels, label_frequencies, make_pairs, Dataset, Example, PairConfig, PairSet};
use crate::error::Result;
use crate::textsim::TokenSequence;

/// Which training examples receive a generated sibling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSelection {
    /// Every example that survives the media filter.
    All,
    /// Examples carrying at least one label with fewer than this many
    /// training examples.
    TailBelow(usize),
}

/// Examples that receive synthetic siblings, in dataset order.
/// Media-labelled examples are never sources.
pub fn source_examples<S: AsRef<str>>(dataset: &Dataset, media: &[S], selection: SourceSelection) -> Vec<Example> {
    let freq = label_frequencies(dataset);
    filter_media_labels(dataset, media)
        .examples()
        .iter()
        .filter(|e| match selection {
            SourceSelection::All => true,
            SourceSelection::TailBelow(n) => e.labels.iter().any(|&l| freq[l] < n),
        })
        .cloned()
        .collect()
}

/// Ids and truncated token sequences of [`source_examples`].
pub fn select_sources<S: AsRef<str>>(
    dataset: &Dataset,
    media: &[S],
    selection: SourceSelection,
    max_words: usize,
) -> Vec<(String, TokenSequence)> {
    source_examples(dataset, media, selection)
        .iter()
        .map(|e| (e.id.clone(), build_input_text(e, max_words)))
        .collect()
}

/// Everything the generative branch produces for one training set.
pub struct GdaOutput {
    pub pairs: PairSet,
    pub model: GeneratorModel,
    pub history: GenHistory,
    /// (source id, generated text), one per selected source.
    pub generated: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdaConfig {
    pub pairs: PairConfig,
    pub train: GenTrainConfig,
    pub decode: DecodeConfig,
    pub sources: SourceSelection,
    pub max_words: usize,
}

impl Default for GdaConfig {
    fn default() -> Self {
        GdaConfig {
            pairs: PairConfig::default(),
            train: GenTrainConfig::default(),
            decode: DecodeConfig::default(),
            sources: SourceSelection::All,
            max_words: crate::corpus::DEFAULT_MAX_WORDS,
        }
    }
}

/// Media filter, same-label-set pairing, generator fit, then one decoded
/// text per source. Empty generations are dropped.
pub fn run_gda<S: AsRef<str>>(dataset: &Dataset, media: &[S], cfg: &GdaConfig) -> Result<GdaOutput> {
    let filtered = filter_media_labels(dataset, media);
    let pairs = make_pairs(&filtered, &cfg.pairs)?;
    let seqs = pair_sequences(&filtered, &pairs, cfg.max_words)?;
    let (model, history) = fit_generator(&seqs, &cfg.train, None)?;
    let sources = select_sources(dataset, media, cfg.sources, cfg.max_words);
    let generated = generate_batch(&model, &sources, &cfg.decode)?
        .into_iter()
        .filter(|(_, text)| !text.is_empty())
        .collect();
    Ok(GdaOutput {
        pairs,
        model,
        history,
        generated,
    })
}
