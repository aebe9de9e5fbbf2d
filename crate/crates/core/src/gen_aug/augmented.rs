use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, LabelVocabulary};
use crate::error::{Error, Result};
use crate::rule_aug::example_from_tokens;
use crate::textsim::tokenize;

/// Default loss weight for synthetic examples.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Gda,
    Eda,
    Wordnet,
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub example: Example,
    pub weight: f64,
    pub provenance: Provenance,
}

/// Original and synthetic examples with per-example loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDataset {
    pub examples: Vec<AugmentedExample>,
    pub label_names: Vec<String>,
}

impl AugmentedDataset {
    /// Every original example at weight 1.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        AugmentedDataset {
            examples: dataset
                .examples()
                .iter()
                .map(|e| AugmentedExample {
                    example: e.clone(),
                    weight: 1.0,
                    provenance: Provenance::Original,
                })
                .collect(),
            label_names: dataset.vocabulary().names().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.examples.iter().filter(|a| a.provenance == provenance).count()
    }

    /// Appends synthetic examples, rejecting ids already present.
    pub fn extend_synthetic(
        &mut self,
        examples: impl IntoIterator<Item = Example>,
        weight: f64,
        provenance: Provenance,
    ) -> Result<()> {
        if !(weight > 0.0) {
            return Err(Error::invalid(format!("synthetic weight must be positive, got {weight}")));
        }
        let mut ids: HashSet<String> = self.examples.iter().map(|a| a.example.id.clone()).collect();
        for example in examples {
            if !ids.insert(example.id.clone()) {
                return Err(Error::DuplicateId(example.id));
            }
            self.examples.push(AugmentedExample {
                example,
                weight,
                provenance,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for a in &self.examples {
            let rec = AugmentedRecord {
                id: a.example.id.clone(),
                title: a.example.title.clone(),
                description: a.example.description.clone(),
                labels: a.example.labels.iter().map(|&l| self.label_names[l].clone()).collect(),
                weight: a.weight,
                provenance: a.provenance,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, label_names: Vec<String>) -> Result<Self> {
        let path = path.as_ref();
        let vocab = LabelVocabulary::new(label_names.clone())?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut examples = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let rec: AugmentedRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let labels = rec
                .labels
                .iter()
                .map(|n| vocab.index_of(n).ok_or_else(|| malformed(format!("unknown label `{n}`"))))
                .collect::<Result<_>>()?;
            examples.push(AugmentedExample {
                example: Example {
                    id: rec.id,
                    title: rec.title,
                    description: rec.description,
                    labels,
                },
                weight: rec.weight,
                provenance: rec.provenance,
            });
        }
        Ok(AugmentedDataset {
            examples,
            label_names,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentedRecord {
    id: String,
    title: String,
    description: String,
    labels: Vec<String>,
    weight: f64,
    provenance: Provenance,
}

/// Originals at weight 1 plus one new example per generated text, inheriting
/// its source's label set, at weight `lambda_gen`.
pub fn build_augmented_dataset(
    dataset: &Dataset,
    generated: &[(String, String)],
    lambda_gen: f64,
) -> Result<AugmentedDataset> {
    build_augmented_dataset_with(dataset, generated, lambda_gen, Provenance::Gda)
}

pub fn build_augmented_dataset_with(
    dataset: &Dataset,
    generated: &[(String, String)],
    lambda_gen: f64,
    provenance: Provenance,
) -> Result<AugmentedDataset> {
    let mut aug = AugmentedDataset::from_dataset(dataset);
    let index = dataset.id_index();
    let tag = match provenance {
        Provenance::Imported => "imp",
        _ => "gda",
    };
    let mut per_source: HashMap<&str, usize> = HashMap::new();
    let mut synthetic = Vec::with_capacity(generated.len());
    for (source, text) in generated {
        let &i = index
            .get(source.as_str())
            .ok_or_else(|| Error::UnknownSourceId(source.clone()))?;
        let n = per_source.entry(source.as_str()).or_insert(0);
        let id = format!("{source}~{tag}{n}");
        *n += 1;
        synthetic.push(example_from_tokens(id, &tokenize(text), &dataset.examples()[i]));
    }
    aug.extend_synthetic(synthetic, lambda_gen, provenance)?;
    Ok(aug)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedRecord {
    source_id: String,
    text: String,
}

/// Reads `(source_id, text)` records and checks them against `dataset` and
/// the word-count bound.
pub fn import_generated(
    path: impl AsRef<Path>,
    dataset: &Dataset,
    max_words: usize,
) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let index = dataset.id_index();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let rec: GeneratedRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if !index.contains_key(rec.source_id.as_str()) {
            return Err(Error::UnknownSourceId(rec.source_id));
        }
        let words = tokenize(&rec.text).len();
        if words > max_words {
            return Err(malformed(format!("{words} words exceeds the bound of {max_words}")));
        }
        out.push((rec.source_id, rec.text));
    }
    Ok(out)
}

pub fn export_generated(path: impl AsRef<Path>, generated: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (source_id, text) in generated {
        serde_json::to_writer(
            &mut w,
            &GeneratedRecord {
                source_id: source_id.clone(),
                text: text.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
