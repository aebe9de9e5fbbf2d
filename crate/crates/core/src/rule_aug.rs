//! Rule-based label-invariant augmenters: the four EDA edit operations and a
//! synonym-only variant.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::textsim::{tokenize, TokenSequence, SEP_MARKER};

const BUNDLED_SYNONYMS: &str = include_str!("../data/synonyms.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Word → synonyms map plus a stopword set that is never edited.
#[derive(Clone, Debug, Default)]
pub struct SynonymLexicon {
    synonyms: HashMap<String, Vec<String>>,
    stopwords: HashSet<String>,
}

impl SynonymLexicon {
    /// Builds a lexicon, dropping self-synonyms, multi-token synonyms and
    /// entries that end up empty.
    pub fn new<I, W, S>(entries: I, stopwords: impl IntoIterator<Item = W>) -> Self
    where
        I: IntoIterator<Item = (W, Vec<S>)>,
        W: Into<String>,
        S: Into<String>,
    {
        let mut synonyms: HashMap<String, Vec<String>> = HashMap::new();
        for (word, syns) in entries {
            let word = word.into().to_lowercase();
            let list = synonyms.entry(word.clone()).or_default();
            for s in syns {
                let s = s.into().to_lowercase();
                if s != word && tokenize(&s).len() == 1 && !list.contains(&s) {
                    list.push(s);
                }
            }
        }
        synonyms.retain(|_, v| !v.is_empty());
        SynonymLexicon {
            synonyms,
            stopwords: stopwords.into_iter().map(Into::into).collect(),
        }
    }

    /// The thesaurus and stopword list shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYNONYMS, BUNDLED_STOPWORDS)
    }

    /// Parses `word<TAB>syn1,syn2,...` lines and a one-per-line stopword list.
    pub fn parse(synonyms: &str, stopwords: &str) -> Self {
        let entries = synonyms
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let (word, syns) = l.split_once('\t')?;
                let list: Vec<&str> = syns.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                Some((word.trim(), list))
            });
        let stop = stopwords
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        SynonymLexicon::new(entries, stop)
    }

    pub fn load(synonyms: impl AsRef<Path>, stopwords: impl AsRef<Path>) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(Self::parse(&read(synonyms.as_ref())?, &read(stopwords.as_ref())?))
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.synonyms.get(word).map(Vec::as_slice)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        word == SEP_MARKER || self.stopwords.contains(word)
    }

    /// A non-stopword with at least one synonym.
    pub fn is_eligible(&self, word: &str) -> bool {
        !self.is_stopword(word) && self.synonyms.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.synonyms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaConfig {
    pub alpha_sr: f64,
    pub alpha_ri: f64,
    pub alpha_rs: f64,
    pub p_rd: f64,
    pub n_aug: usize,
}

impl Default for EdaConfig {
    fn default() -> Self {
        EdaConfig {
            alpha_sr: 0.1,
            alpha_ri: 0.1,
            alpha_rs: 0.1,
            p_rd: 0.1,
            n_aug: 1,
        }
    }
}

impl EdaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_sr", self.alpha_sr),
            ("alpha_ri", self.alpha_ri),
            ("alpha_rs", self.alpha_rs),
            ("p_rd", self.p_rd),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.n_aug == 0 {
            return Err(Error::invalid("n_aug must be at least 1"));
        }
        Ok(())
    }
}

/// The edit applied to one EDA copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdaOp {
    SynonymReplacement,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

impl EdaOp {
    pub const ALL: [EdaOp; 4] = [
        EdaOp::SynonymReplacement,
        EdaOp::RandomInsertion,
        EdaOp::RandomSwap,
        EdaOp::RandomDeletion,
    ];
}

/// Replaces up to `n` distinct eligible positions with a random synonym.
pub fn synonym_replacement<R: Rng + ?Sized>(
    tokens: &TokenSequence,
    n: usize,
    lex: &SynonymLexicon,
    rng: &mut R,
) -> TokenSequence {
    let mut out = tokens.clone().into_inner();
    let mut eligible: Vec<usize> = (0..out.len()).filter(|&i| lex.is_eligible(&out[i])).collect();
    eligible.shuffle(rng);
    for &i in eligible.iter().take(n) {
        let syns = lex.synonyms(&out[i]).expect("eligible words have synonyms");
        out[i] = syns.choose(rng).expect("non-empty synonym list").clone();
    }
    TokenSequence::from_tokens(out)
}

/// `n` times: insert a synonym of a random eligible word at a random position.
pub fn random_insertion<R: Rng + ?Sized>(
    tokens: &TokenSequence,
    n: usize,
    lex: &SynonymLexicon,
    rng: &mut R,
) -> TokenSequence {
    let mut out = tokens.clone().into_inner();
    for _ in 0..n {
        let eligible: Vec<usize> = (0..out.len()).filter(|&i| lex.is_eligible(&out[i])).collect();
        let Some(&src) = eligible.choose(rng) else {
            break;
        };
        let syn = lex.synonyms(&out[src]).expect("eligible").choose(rng).expect("non-empty").clone();
        let pos = rng.random_range(0..=out.len());
        out.insert(pos, syn);
    }
    TokenSequence::from_tokens(out)
}

/// `n` times: swap two uniformly chosen positions.
pub fn random_swap<R: Rng + ?Sized>(tokens: &TokenSequence, n: usize, rng: &mut R) -> TokenSequence {
    let mut out = tokens.clone().into_inner();
    if out.len() < 2 {
        return TokenSequence::from_tokens(out);
    }
    for _ in 0..n {
        let i = rng.random_range(0..out.len());
        let j = rng.random_range(0..out.len());
        out.swap(i, j);
    }
    TokenSequence::from_tokens(out)
}

/// Keeps each token with probability `1 - p`; if everything goes, one
/// uniformly chosen token survives.
pub fn random_deletion<R: Rng + ?Sized>(tokens: &TokenSequence, p: f64, rng: &mut R) -> TokenSequence {
    if tokens.len() <= 1 || p <= 0.0 {
        return tokens.clone();
    }
    let kept: Vec<String> = tokens.iter().filter(|_| rng.random::<f64>() >= p).cloned().collect();
    if kept.is_empty() {
        let i = rng.random_range(0..tokens.len());
        return TokenSequence::from_tokens([tokens.as_slice()[i].clone()]);
    }
    TokenSequence::from_tokens(kept)
}

/// Number of edits for a ratio on a text of `len` tokens.
pub fn edit_count(alpha: f64, len: usize) -> usize {
    ((alpha * len as f64).round() as usize).max(1)
}

/// Applies one operation with the counts prescribed by `cfg`.
pub fn apply_op<R: Rng + ?Sized>(
    op: EdaOp,
    tokens: &TokenSequence,
    cfg: &EdaConfig,
    lex: &SynonymLexicon,
    rng: &mut R,
) -> TokenSequence {
    let len = tokens.len();
    match op {
        EdaOp::SynonymReplacement => synonym_replacement(tokens, edit_count(cfg.alpha_sr, len), lex, rng),
        EdaOp::RandomInsertion => random_insertion(tokens, edit_count(cfg.alpha_ri, len), lex, rng),
        EdaOp::RandomSwap => random_swap(tokens, edit_count(cfg.alpha_rs, len), rng),
        EdaOp::RandomDeletion => random_deletion(tokens, cfg.p_rd, rng),
    }
}

/// Rebuilds an example from tokens, splitting title and description at the
/// first `/SEP/`.
pub fn example_from_tokens(id: String, tokens: &TokenSequence, parent: &Example) -> Example {
    let toks = tokens.as_slice();
    let (title, description) = match toks.iter().position(|t| t == SEP_MARKER) {
        Some(p) => (toks[..p].join(" "), toks[p + 1..].join(" ")),
        None => (toks.join(" "), String::new()),
    };
    Example {
        id,
        title,
        description,
        labels: parent.labels.clone(),
    }
}

/// `n_aug` copies of `example`, each edited by one uniformly drawn operation.
pub fn eda_augment<R: Rng + ?Sized>(
    example: &Example,
    cfg: &EdaConfig,
    lex: &SynonymLexicon,
    rng: &mut R,
) -> Vec<Example> {
    let tokens = tokenize(&example.input_text());
    (0..cfg.n_aug)
        .map(|k| {
            let op = *EdaOp::ALL.choose(rng).expect("four operations");
            let edited = apply_op(op, &tokens, cfg, lex, rng);
            example_from_tokens(format!("{}~eda{k}", example.id), &edited, example)
        })
        .collect()
}

/// Synonym replacement of `n` words and nothing else.
pub fn wordnet_augment<R: Rng + ?Sized>(
    example: &Example,
    n: usize,
    lex: &SynonymLexicon,
    rng: &mut R,
) -> Example {
    let tokens = tokenize(&example.input_text());
    let edited = synonym_replacement(&tokens, n, lex, rng);
    example_from_tokens(format!("{}~wordnet", example.id), &edited, example)
}
