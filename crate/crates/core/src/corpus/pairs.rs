use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::textsim::{similarity_ratio, tokenize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    pub min_words: usize,
    pub max_words: usize,
    /// Pairs whose texts are more similar than this are dropped.
    pub sim_threshold: f64,
    pub max_pairs_per_group: usize,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            min_words: 5,
            max_words: 200,
            sim_threshold: 0.95,
            max_pairs_per_group: 20,
            seed: 0,
        }
    }
}

impl PairConfig {
    fn validate(&self) -> Result<()> {
        if self.min_words > self.max_words {
            return Err(Error::invalid(format!(
                "min_words {} exceeds max_words {}",
                self.min_words, self.max_words
            )));
        }
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::invalid(format!(
                "similarity threshold {} outside [0, 1]",
                self.sim_threshold
            )));
        }
        Ok(())
    }
}

/// Ordered (source id, target id) pairs of examples sharing a label set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(String, String)>,
    pub provenance: PairConfig,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Groups examples by exact label set and samples up to
/// `max_pairs_per_group` ordered pairs per group whose texts both fall inside
/// the word bounds and whose similarity does not exceed the threshold.
pub fn make_pairs(dataset: &Dataset, cfg: &PairConfig) -> Result<PairSet> {
    cfg.validate()?;
    let mut groups: BTreeMap<&LabelSet, Vec<usize>> = BTreeMap::new();
    let texts: Vec<String> = dataset.examples().iter().map(|e| e.input_text()).collect();
    for (i, e) in dataset.examples().iter().enumerate() {
        let words = word_count(&texts[i]);
        if words >= cfg.min_words && words <= cfg.max_words {
            groups.entry(&e.labels).or_default().push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::new();
    let cap = cfg.max_pairs_per_group;
    for members in groups.values() {
        let n = members.len();
        if n < 2 || cap == 0 {
            continue;
        }
        let mut accepted = 0;
        let mut accept = |i: usize, j: usize, pairs: &mut Vec<(String, String)>| {
            let (a, b) = (members[i], members[j]);
            if similarity_ratio(&texts[a], &texts[b]) <= cfg.sim_threshold {
                let ex = dataset.examples();
                pairs.push((ex[a].id.clone(), ex[b].id.clone()));
                accepted += 1;
            }
            accepted >= cap
        };
        let total = n * (n - 1);
        if total <= cap.saturating_mul(8) {
            let mut all: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .collect();
            all.shuffle(&mut rng);
            for (i, j) in all {
                if accept(i, j, &mut pairs) {
                    break;
                }
            }
        } else {
            // Large group: draw distinct ordered pairs without enumerating n².
            let mut tried = HashSet::new();
            let budget = cap.saturating_mul(16);
            while tried.len() < budget {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i == j || !tried.insert((i, j)) {
                    continue;
                }
                if accept(i, j, &mut pairs) {
                    break;
                }
            }
        }
    }
    Ok(PairSet {
        pairs,
        provenance: cfg.clone(),
    })
}

/// Re-checks every pair against label equality, word bounds and similarity.
pub fn validate_pairs(dataset: &Dataset, pairs: &PairSet) -> Result<()> {
    let cfg = &pairs.provenance;
    let index = dataset.id_index();
    let lookup = |id: &str| {
        index
            .get(id)
            .map(|&i| &dataset.examples()[i])
            .ok_or_else(|| Error::UnknownSourceId(id.to_string()))
    };
    for (s, t) in &pairs.pairs {
        let (a, b) = (lookup(s)?, lookup(t)?);
        if s == t {
            return Err(Error::invalid(format!("pair ({s}, {t}) pairs an example with itself")));
        }
        if a.labels != b.labels {
            return Err(Error::invalid(format!("pair ({s}, {t}) has different label sets")));
        }
        for e in [a, b] {
            let words = word_count(&e.input_text());
            if words < cfg.min_words || words > cfg.max_words {
                return Err(Error::invalid(format!("`{}` has {words} words", e.id)));
            }
        }
        if similarity_ratio(&a.input_text(), &b.input_text()) > cfg.sim_threshold {
            return Err(Error::invalid(format!("pair ({s}, {t}) is too similar")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    source_id: String,
    target_id: String,
}

pub fn save_pairs(path: impl AsRef<Path>, pairs: &PairSet) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (s, t) in &pairs.pairs {
        serde_json::to_writer(
            &mut w,
            &PairRecord {
                source_id: s.clone(),
                target_id: t.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads pairs written by [`save_pairs`]; `provenance` is supplied by the
/// caller since the file carries ids only.
pub fn load_pairs(path: impl AsRef<Path>, provenance: PairConfig) -> Result<PairSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        pairs.push((rec.source_id, rec.target_id));
    }
    Ok(PairSet { pairs, provenance })
}
