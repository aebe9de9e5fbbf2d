//! Examples, label vocabularies and dataset-level operations: splitting,
//! subsampling, label statistics, media-label filtering and pairing.

mod io;
mod pairs;
mod propensity;

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textsim::{tokenize, TokenSequence, SEP_MARKER};

pub use io::{
    load_dataset, load_dataset_with, load_label_list, save_dataset, write_label_list,
    DatasetFormat, LoadOptions,
};
pub use pairs::{load_pairs, make_pairs, save_pairs, validate_pairs, PairConfig, PairSet};
pub use propensity::{compute_propensities, PropensityModel, PROPENSITY_FLOOR};

/// Default maximum number of words fed to a classifier.
pub const DEFAULT_MAX_WORDS: usize = 500;

/// Labels that dominate product catalogues and are excluded before pairing.
pub const DEFAULT_MEDIA_LABELS: [&str; 5] = ["books", "music", "movies", "tv", "games"];

/// Set of label indices into a [`LabelVocabulary`].
pub type LabelSet = BTreeSet<usize>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub title: String,
    pub description: String,
    pub labels: LabelSet,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        description: impl Into<String>,
        labels: impl IntoIterator<Item = usize>,
    ) -> Self {
        Example {
            id: id.into(),
            title: title.into(),
            description: description.into(),
            labels: labels.into_iter().collect(),
        }
    }

    /// `title /SEP/ description` as one raw string.
    pub fn input_text(&self) -> String {
        format!("{} {} {}", self.title, SEP_MARKER, self.description)
    }

    /// Binary label vector of length `num_labels`.
    pub fn label_vector(&self, num_labels: usize) -> Vec<f64> {
        let mut y = vec![0.0; num_labels];
        for &l in &self.labels {
            y[l] = 1.0;
        }
        y
    }
}

/// Tokenized `title /SEP/ description`, truncated to `max_words` tokens.
pub fn build_input_text(example: &Example, max_words: usize) -> TokenSequence {
    let mut tokens = tokenize(&example.input_text());
    tokens.truncate(max_words);
    tokens
}

/// Ordered label names with per-label example counts for one dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
    frequencies: Vec<usize>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label name `{name}`")));
            }
        }
        let frequencies = vec![0; names.len()];
        Ok(LabelVocabulary {
            names,
            index,
            frequencies,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn frequencies(&self) -> &[usize] {
        &self.frequencies
    }

    fn push(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.frequencies.push(0);
        i
    }

    fn with_counts(&self, examples: &[Example]) -> Self {
        let mut vocab = self.clone();
        vocab.frequencies = count_labels(examples, self.len());
        vocab
    }
}

fn count_labels(examples: &[Example], num_labels: usize) -> Vec<usize> {
    let mut counts = vec![0; num_labels];
    for e in examples {
        for &l in &e.labels {
            counts[l] += 1;
        }
    }
    counts
}

/// Immutable collection of examples over a shared label vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    examples: Vec<Example>,
    vocabulary: LabelVocabulary,
}

impl Dataset {
    /// Validates ids and label indices and recomputes label frequencies.
    pub fn new(examples: Vec<Example>, vocabulary: LabelVocabulary) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for e in &examples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if let Some(&bad) = e.labels.iter().find(|&&l| l >= vocabulary.len()) {
                return Err(Error::invalid(format!(
                    "example `{}` has label index {bad} but only {} labels exist",
                    e.id,
                    vocabulary.len()
                )));
            }
        }
        let vocabulary = vocabulary.with_counts(&examples);
        Ok(Dataset {
            examples,
            vocabulary,
        })
    }

    /// Builds the vocabulary from label names in order of first appearance.
    pub fn from_named<I, S>(records: impl IntoIterator<Item = (Example, I)>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = LabelVocabulary::new(Vec::new())?;
        let examples = records
            .into_iter()
            .map(|(mut e, names)| {
                e.labels = names.into_iter().map(|n| vocab.push(n.as_ref())).collect();
                e
            })
            .collect();
        Dataset::new(examples, vocab)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Id → position lookup table.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect()
    }

    /// Same vocabulary, different examples.
    pub fn with_examples(&self, examples: Vec<Example>) -> Result<Self> {
        Dataset::new(examples, self.vocabulary.clone())
    }

    fn select(&self, mut indices: Vec<usize>) -> Dataset {
        indices.sort_unstable();
        let examples: Vec<Example> = indices.iter().map(|&i| self.examples[i].clone()).collect();
        let vocabulary = self.vocabulary.with_counts(&examples);
        Dataset {
            examples,
            vocabulary,
        }
    }
}

/// Number of examples whose label set contains each label.
pub fn label_frequencies(dataset: &Dataset) -> Vec<usize> {
    count_labels(&dataset.examples, dataset.num_labels())
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Uniform random train/validation partition with `round(fraction * N)`
/// validation examples. Record order is preserved within each side.
pub fn split_train_validation(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let n_valid = (fraction * n as f64).round() as usize;
    let idx = shuffled_indices(n, seed);
    let (valid, train) = idx.split_at(n_valid);
    Ok((dataset.select(train.to_vec()), dataset.select(valid.to_vec())))
}

/// Number of examples kept by [`subsample`]: `floor(fraction * N)`.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Uniform sample without replacement of [`subsample_size`] examples.
/// Vocabulary indices are unchanged; `fraction == 1` returns the dataset.
pub fn subsample(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = dataset.len();
    let keep = subsample_size(n, fraction);
    let mut idx = shuffled_indices(n, seed);
    idx.truncate(keep);
    Ok(dataset.select(idx))
}

/// Drops every example carrying one of the `media` labels. Names that are not
/// in the vocabulary are logged and ignored.
pub fn filter_media_labels<S: AsRef<str>>(dataset: &Dataset, media: &[S]) -> Dataset {
    let mut banned = BTreeSet::new();
    for name in media {
        match dataset.vocabulary.index_of(name.as_ref()) {
            Some(i) => {
                banned.insert(i);
            }
            None => log::warn!("media label `{}` not in vocabulary", name.as_ref()),
        }
    }
    let keep = (0..dataset.len())
        .filter(|&i| dataset.examples[i].labels.is_disjoint(&banned))
        .collect();
    dataset.select(keep)
}
