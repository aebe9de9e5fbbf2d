use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

/// Word-level token vocabulary. Special tokens occupy the first ids; the
/// first special is the unknown-word fallback.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    /// Specials first (in the given order), then every token seen at least
    /// `min_freq` times, most frequent first with ties broken alphabetically.
    pub fn build<'a, I>(tokens: I, min_freq: usize, specials: &[&str]) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut words: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq.max(1) && !specials.contains(w))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let all: Vec<String> = specials
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|(w, _)| w.to_string()))
            .collect();
        TokenVocab::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or of the unknown-word token (id 0).
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TokenVocab { tokens, index }
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_fallback() {
        let v = TokenVocab::build(["b", "a", "b", "c", "a", "b"], 2, &["<unk>", "<cls>"]);
        assert_eq!(v.tokens(), &["<unk>", "<cls>", "b", "a"]);
        assert_eq!(v.id("c"), 0);
        assert_eq!(v.id("a"), 3);
    }
}
