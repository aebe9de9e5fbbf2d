//! Synthetic corpora for desk-scale experiments: a Zipf-distributed
//! long-tail catalogue whose texts come from per-label template grammars,
//! and a keyword-in-noise task for comparing classifier heads.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, DEFAULT_MEDIA_LABELS};
use crate::error::{Error, Result};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FILLER_OFFSET: usize = 200_000;

/// Pronounceable letters-only pseudo-word for an index; distinct indices
/// below 70^3 give distinct words.
pub fn pseudo_word(mut index: usize) -> String {
    let mut out = String::new();
    for _ in 0..3 {
        let syl = index % 70;
        index /= 70;
        out.push(CONSONANTS[syl / 5] as char);
        out.push(VOWELS[syl % 5] as char);
    }
    while index > 0 {
        out.push(CONSONANTS[index % 14] as char);
        index /= 14;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZipfConfig {
    pub num_labels: usize,
    pub num_train: usize,
    pub num_test: usize,
    /// Exponent of the label-frequency law.
    pub exponent: f64,
    pub keywords_per_label: usize,
    pub filler_words: usize,
    pub templates_per_label: usize,
    /// Labels at or above this index also carry a parent label.
    pub parent_from: usize,
    pub seed: u64,
}

impl Default for ZipfConfig {
    fn default() -> Self {
        ZipfConfig {
            num_labels: 200,
            num_train: 5000,
            num_test: 1000,
            exponent: 1.0,
            keywords_per_label: 6,
            filler_words: 60,
            templates_per_label: 3,
            parent_from: 20,
            seed: 0,
        }
    }
}

/// Slot patterns: `K` is a keyword of the label, `F` a filler word, anything
/// else is emitted literally.
const PATTERNS: &[&str] = &[
    "K K F",
    "F K of K",
    "K with F K",
    "the K F K",
    "K and K",
    "F F K K",
    "new K for F",
    "K K K",
];

/// Per-label grammar: keyword pool and the patterns it expands.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrammar {
    pub keywords: Vec<String>,
    pub patterns: Vec<&'static str>,
}

pub struct ZipfCorpus {
    pub train: Dataset,
    pub test: Dataset,
    pub grammars: Vec<LabelGrammar>,
}

fn label_name(l: usize) -> String {
    match DEFAULT_MEDIA_LABELS.get(l) {
        Some(m) => m.to_string(),
        None => format!("label{l:03}"),
    }
}

fn expand<R: Rng + ?Sized>(pattern: &str, grammar: &LabelGrammar, filler: &[String], rng: &mut R) -> Vec<String> {
    pattern
        .split(' ')
        .map(|slot| match slot {
            "K" => grammar.keywords.choose(rng).expect("keywords").clone(),
            "F" => filler.choose(rng).expect("filler").clone(),
            lit => lit.to_string(),
        })
        .collect()
}

impl ZipfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_labels <= DEFAULT_MEDIA_LABELS.len() || self.parent_from <= DEFAULT_MEDIA_LABELS.len() {
            return Err(Error::invalid("need more labels than media labels"));
        }
        if self.keywords_per_label == 0 || self.filler_words == 0 || self.templates_per_label == 0 {
            return Err(Error::invalid("keyword, filler and template counts must be positive"));
        }
        if !(self.exponent > 0.0) {
            return Err(Error::invalid("exponent must be positive"));
        }
        Ok(())
    }

    /// Parent of a label at or above `parent_from`: one of the non-media
    /// head labels below it.
    pub fn parent(&self, l: usize) -> Option<usize> {
        let media = DEFAULT_MEDIA_LABELS.len();
        (l >= self.parent_from).then(|| media + l % (self.parent_from - media))
    }
}

/// Draws a train and a test set from one label law and one set of grammars.
/// The first five labels are named after the default media labels and never
/// co-occur with others.
pub fn zipf_corpus(cfg: &ZipfConfig) -> Result<ZipfCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grammars: Vec<LabelGrammar> = (0..cfg.num_labels)
        .map(|l| LabelGrammar {
            keywords: (0..cfg.keywords_per_label)
                .map(|j| pseudo_word(l * cfg.keywords_per_label + j))
                .collect(),
            patterns: PATTERNS
                .choose_multiple(&mut rng, cfg.templates_per_label.min(PATTERNS.len()))
                .copied()
                .collect(),
        })
        .collect();
    let filler: Vec<String> = (0..cfg.filler_words).map(|j| pseudo_word(FILLER_OFFSET + j)).collect();
    let zipf = Zipf::new(cfg.num_labels as f64, cfg.exponent).map_err(|e| Error::invalid(e.to_string()))?;

    let draw = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<(Example, Vec<String>)> {
        (0..n)
            .map(|i| {
                let primary = zipf.sample(rng) as usize - 1;
                let mut labels = vec![primary];
                labels.extend(cfg.parent(primary));
                let g = &grammars[primary];
                let title = expand(g.patterns.choose(rng).expect("patterns"), g, &filler, rng);
                let mut desc = Vec::new();
                for &l in &labels {
                    let g = &grammars[l];
                    for _ in 0..2 {
                        desc.extend(expand(g.patterns.choose(rng).expect("patterns"), g, &filler, rng));
                    }
                    for _ in 0..rng.random_range(2..=4) {
                        desc.push(filler.choose(rng).expect("filler").clone());
                    }
                }
                let names = labels.iter().map(|&l| label_name(l)).collect();
                (Example::new(format!("{prefix}{i:05}"), title.join(" "), desc.join(" "), []), names)
            })
            .collect()
    };
    let train_rows = draw("tr", cfg.num_train, &mut rng);
    let test_rows = draw("te", cfg.num_test, &mut rng);

    // Both splits share the full label vocabulary so indices line up.
    let names: Vec<String> = (0..cfg.num_labels).map(label_name).collect();
    let vocab_rows = |rows: Vec<(Example, Vec<String>)>| -> Result<Dataset> {
        let vocab = crate::corpus::LabelVocabulary::new(names.clone())?;
        let examples = rows
            .into_iter()
            .map(|(mut e, ls)| {
                e.labels = ls.iter().map(|n| vocab.index_of(n).expect("known label")).collect();
                e
            })
            .collect();
        Dataset::new(examples, vocab)
    };
    Ok(ZipfCorpus {
        train: vocab_rows(train_rows)?,
        test: vocab_rows(test_rows)?,
        grammars,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordTaskConfig {
    pub num_labels: usize,
    pub num_train: usize,
    pub num_test: usize,
    /// Labels per example, drawn uniformly without replacement.
    pub labels_per_example: usize,
    pub noise_words: usize,
    /// Noise tokens per example; keywords are inserted at random positions.
    pub length: usize,
    pub seed: u64,
}

impl Default for KeywordTaskConfig {
    fn default() -> Self {
        KeywordTaskConfig {
            num_labels: 20,
            num_train: 600,
            num_test: 200,
            labels_per_example: 3,
            noise_words: 50,
            length: 30,
            seed: 0,
        }
    }
}

/// Each label has one keyword; an example is a run of noise words with the
/// keywords of its labels buried at random positions. Returns (train, test).
pub fn keyword_task(cfg: &KeywordTaskConfig) -> Result<(Dataset, Dataset)> {
    if cfg.labels_per_example == 0 || cfg.labels_per_example > cfg.num_labels || cfg.noise_words == 0 {
        return Err(Error::invalid("invalid keyword task configuration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keywords: Vec<String> = (0..cfg.num_labels).map(pseudo_word).collect();
    let noise: Vec<String> = (0..cfg.noise_words).map(|j| pseudo_word(FILLER_OFFSET + j)).collect();
    let names: Vec<String> = (0..cfg.num_labels).map(|l| format!("k{l:02}")).collect();
    let all: Vec<usize> = (0..cfg.num_labels).collect();
    let mut make = |prefix: &str, n: usize| -> Result<Dataset> {
        let examples = (0..n)
            .map(|i| {
                let labels: Vec<usize> = all.choose_multiple(&mut rng, cfg.labels_per_example).copied().collect();
                let mut words: Vec<String> = (0..cfg.length).map(|_| noise.choose(&mut rng).expect("noise").clone()).collect();
                for &l in &labels {
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, keywords[l].clone());
                }
                Example::new(format!("{prefix}{i:05}"), words.join(" "), "", labels)
            })
            .collect();
        Dataset::new(examples, crate::corpus::LabelVocabulary::new(names.clone())?)
    };
    let train = make("tr", cfg.num_train)?;
    let test = make("te", cfg.num_test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::label_frequencies;
    use crate::textsim::tokenize;

    #[test]
    fn pseudo_words_are_distinct_letters() {
        let words: std::collections::BTreeSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(words.len(), 5000);
        assert!(words.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
        assert_ne!(pseudo_word(FILLER_OFFSET), pseudo_word(0));
        assert_eq!(tokenize(&pseudo_word(123)).len(), 1);
    }

    #[test]
    fn zipf_corpus_has_a_long_tail() {
        let c = zipf_corpus(&ZipfConfig::default()).unwrap();
        assert_eq!(c.train.len(), 5000);
        assert_eq!(c.test.len(), 1000);
        assert_eq!(c.train.num_labels(), 200);
        assert_eq!(c.test.vocabulary().names(), c.train.vocabulary().names());
        let freq = label_frequencies(&c.train);
        let tail = freq.iter().filter(|&&f| f < 10).count();
        assert!(tail >= 50, "only {tail} tail labels");
        assert!(freq[0] > 500);
        for e in c.train.examples() {
            let words = tokenize(&e.input_text()).len();
            assert!((5..=200).contains(&words));
            if e.labels.iter().any(|&l| l < 5) {
                assert_eq!(e.labels.len(), 1);
            }
        }
        let again = zipf_corpus(&ZipfConfig::default()).unwrap();
        assert_eq!(again.train, c.train);
    }

    #[test]
    fn parents_are_non_media_heads() {
        let cfg = ZipfConfig::default();
        assert_eq!(cfg.parent(3), None);
        assert_eq!(cfg.parent(19), None);
        assert_eq!(cfg.parent(20), Some(10));
        assert_eq!(cfg.parent(199), Some(9));
        for l in 20..200 {
            assert!((5..20).contains(&cfg.parent(l).unwrap()));
        }
    }

    #[test]
    fn keyword_task_buries_each_label_keyword() {
        let cfg = KeywordTaskConfig::default();
        let (train, test) = keyword_task(&cfg).unwrap();
        assert_eq!((train.len(), test.len()), (600, 200));
        for e in train.examples() {
            assert_eq!(e.labels.len(), 3);
            let toks = tokenize(&e.title);
            assert_eq!(toks.len(), 33);
            for &l in &e.labels {
                assert!(toks.iter().any(|t| *t == pseudo_word(l)));
            }
        }
    }
}
