//! Tokenization, gestalt string similarity and sentence-level BLEU.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Literal marker joining a title and a description into one input text.
pub const SEP_MARKER: &str = "/SEP/";

/// Floor substituted for an n-gram precision with a zero numerator.
pub const BLEU_FLOOR: f64 = 1e-9;

/// Ordered list of lowercase word tokens. Never contains an empty token.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Builds a sequence from pre-split tokens, dropping empty strings.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSequence(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn truncate(&mut self, len: usize) {
        self.0.truncate(len);
    }

    /// Space-joined text; `tokenize` maps it back to the same sequence.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        TokenSequence::from_tokens(tokens)
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Lowercases, splits on whitespace and emits every punctuation character as
/// its own token. The `/SEP/` marker (any case) survives as one token.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let mut rest = lower.as_str();
        while let Some(pos) = rest.find("/sep/") {
            split_word(&rest[..pos], &mut out);
            out.push(SEP_MARKER.to_string());
            rest = &rest[pos + 5..];
        }
        split_word(rest, &mut out);
    }
    TokenSequence(out)
}

fn split_word(word: &str, out: &mut Vec<String>) {
    let mut current = String::new();
    for ch in word.chars() {
        if is_punct(ch) {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
}

fn is_punct(ch: char) -> bool {
    ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace() && !ch.is_ascii())
}

/// Gestalt pattern-matching ratio `2M / (|a| + |b|)` over characters, where
/// `M` is the total size of the matching blocks found by recursively taking
/// the longest common substring (earliest in `a`, then earliest in `b`) and
/// recursing on both sides. No junk heuristics. Two empty strings give 1.0.
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / total as f64
}

/// Total length of the gestalt matching blocks between `a` and `b`.
pub fn matched_chars<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut matched = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    // One row of the longest-suffix table, reused across calls.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi, &mut prev, &mut cur);
        if k == 0 {
            continue;
        }
        matched += k;
        if alo < i && blo < j {
            stack.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            stack.push((i + k, ahi, j + k, bhi));
        }
    }
    matched
}

#[allow(clippy::too_many_arguments)]
fn longest_match<T: Eq>(
    a: &[T],
    b: &[T],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    prev: &mut [usize],
    cur: &mut [usize],
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_k) = (alo, blo, 0);
    for slot in prev[blo..=bhi].iter_mut() {
        *slot = 0;
    }
    for i in alo..ahi {
        cur[blo] = 0;
        for j in blo..bhi {
            // prev/cur are offset by one: slot j + 1 holds the run ending at j.
            let k = if a[i] == b[j] { prev[j] + 1 } else { 0 };
            cur[j + 1] = k;
            if k > best_k {
                best_i = i + 1 - k;
                best_j = j + 1 - k;
                best_k = k;
            }
        }
        prev[blo..=bhi].copy_from_slice(&cur[blo..=bhi]);
    }
    (best_i, best_j, best_k)
}

/// Single-reference sentence BLEU with uniform n-gram weights up to `max_n`,
/// clipped n-gram precisions floored at [`BLEU_FLOOR`], and brevity penalty
/// `exp(min(0, 1 - r/c))`. An empty candidate scores 0.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    assert!(max_n >= 1, "bleu requires max_n >= 1");
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let r = reference.len();
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(candidate.as_slice(), n);
        let ref_counts = ngram_counts(reference.as_slice(), n);
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = c.saturating_sub(n - 1);
        let precision = if clipped == 0 || total == 0 {
            BLEU_FLOOR
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let brevity = (1.0 - r as f64 / c as f64).min(0.0).exp();
    brevity * (log_sum / max_n as f64).exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}
