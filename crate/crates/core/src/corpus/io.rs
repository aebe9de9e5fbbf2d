use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, LabelVocabulary};
use crate::error::{Error, Result};

/// On-disk dataset encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One JSON object per line: `id`, `title`, `description`, `labels`.
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Reject examples without labels.
    pub strict: bool,
    /// Resolve labels against a fixed vocabulary instead of growing one.
    pub vocabulary: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    title: String,
    description: String,
    labels: Vec<String>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    load_dataset_with(path, format, &LoadOptions::default())
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    options: &LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let DatasetFormat::Jsonl = format;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let fixed = match &options.vocabulary {
        Some(names) => Some(LabelVocabulary::new(names.clone())?),
        None => None,
    };
    let mut records = Vec::new();
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
        let rec: Record = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if options.strict && rec.labels.is_empty() {
            return Err(Error::EmptyLabels(rec.id));
        }
        if let Some(vocab) = &fixed {
            if let Some(unknown) = rec.labels.iter().find(|l| vocab.index_of(l).is_none()) {
                return Err(malformed(format!("unknown label `{unknown}`")));
            }
        }
        records.push((Example::new(rec.id, rec.title, rec.description, []), rec.labels));
    }
    match fixed {
        Some(vocab) => {
            let examples = records
                .into_iter()
                .map(|(mut e, names)| {
                    e.labels = names.iter().filter_map(|n| vocab.index_of(n)).collect();
                    e
                })
                .collect();
            Dataset::new(examples, vocab)
        }
        None => Dataset::from_named(records),
    }
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let vocab = dataset.vocabulary();
    for e in dataset.examples() {
        let rec = Record {
            id: e.id.clone(),
            title: e.title.clone(),
            description: e.description.clone(),
            labels: e
                .labels
                .iter()
                .map(|&l| vocab.names()[l].clone())
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a plain-text list, one label name per line; blank lines and `#`
/// comments are skipped.
pub fn load_label_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_label_list(&text))
}

pub(crate) fn parse_label_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn write_label_list(path: impl AsRef<Path>, names: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut text = names.join("\n");
    if !names.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
