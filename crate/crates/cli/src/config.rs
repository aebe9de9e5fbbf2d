//! Pipeline configuration: one TOML file, every field optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};

use xmcaug::classifier::{ClfTrainConfig, HeadKind};
use xmcaug::corpus::PairConfig;
use xmcaug::gen_aug::{DecodeConfig, GenTrainConfig, SourceSelection};
use xmcaug::nn::OptimizerKind;
use xmcaug::rule_aug::EdaConfig;

/// Defaults in one place.
pub mod defaults {
    /// Weight of synthetic examples in the loss.
    pub const LAMBDA: f64 = 0.5;
    /// Candidate weights tried by `sweep`.
    pub const LAMBDA_GRID: [f64; 3] = [0.25, 0.5, 1.0];
    /// Pairs whose texts are more similar than this are dropped.
    pub const SIM_THRESHOLD: f64 = 0.95;
    pub const PAIR_MIN_WORDS: usize = 5;
    pub const PAIR_MAX_WORDS: usize = 200;
    pub const BEAM_WIDTH: usize = 10;
    pub const TEMPERATURE: f64 = 1.0;
    pub const REPETITION_PENALTY: f64 = 1.0;
    pub const LR_VANILLA: f64 = 1e-6;
    pub const LR_LABEL_ATTENTION: f64 = 5e-6;
    pub const LR_GENERATOR: f64 = 1e-4;
    /// EDA edit rate shared by the four operations.
    pub const EDA_ALPHA: f64 = 0.1;
    pub const MAX_WORDS: usize = 500;
    pub const PROPENSITY_A: f64 = 0.55;
    pub const PROPENSITY_B: f64 = 1.5;
    pub const SWEEP_FRACTIONS: [f64; 4] = [1.0, 0.5, 0.05, 0.01];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AugMethod {
    None,
    Gda,
    Eda,
    Wordnet,
    Imported,
}

impl AugMethod {
    /// Label used in reports.
    pub fn display(self) -> &'static str {
        match self {
            AugMethod::None => "-",
            AugMethod::Gda => "GDA",
            AugMethod::Eda => "EDA",
            AugMethod::Wordnet => "WordNet",
            AugMethod::Imported => "Imported",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            AugMethod::None => "none",
            AugMethod::Gda => "gda",
            AugMethod::Eda => "eda",
            AugMethod::Wordnet => "wordnet",
            AugMethod::Imported => "imported",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != AugMethod::None
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Training corpus (JSONL).
    pub dataset: Option<PathBuf>,
    /// Held-out test corpus; split off the training corpus when absent.
    pub test_dataset: Option<PathBuf>,
    /// `word<TAB>syn,syn` lexicon and stopword list; bundled when absent.
    pub synonyms: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// One label name per line; the five bundled media labels when absent.
    pub media_labels: Option<PathBuf>,
    /// Externally generated texts for the `imported` method.
    pub imported: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Share of the training corpus kept, in (0, 1].
    pub fraction: f64,
    /// Share split off as test data when no test corpus is given.
    pub test_fraction: f64,
    /// Share of the (subsampled) training data held out for choosing the
    /// synthetic-example weight; 0 disables the split.
    pub validation_fraction: f64,
    pub max_words: usize,
    pub strict: bool,
    pub propensity_a: f64,
    pub propensity_b: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            fraction: 1.0,
            test_fraction: 0.2,
            validation_fraction: 0.1,
            max_words: defaults::MAX_WORDS,
            strict: false,
            propensity_a: defaults::PROPENSITY_A,
            propensity_b: defaults::PROPENSITY_B,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub head: HeadKind,
    /// Per-head default when absent.
    pub learning_rate: Option<f64>,
    /// Chosen from the training fraction when absent.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub dim: usize,
    pub min_token_freq: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            head: HeadKind::LabelAttention,
            learning_rate: None,
            epochs: None,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            dim: 64,
            min_token_freq: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub method: AugMethod,
    /// Loss weight of synthetic examples.
    pub weight: f64,
    pub sources: SourceSelection,
    pub eda: EdaConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: AugMethod::None,
            weight: defaults::LAMBDA,
            sources: SourceSelection::All,
            eda: EdaConfig {
                alpha_sr: defaults::EDA_ALPHA,
                alpha_ri: defaults::EDA_ALPHA,
                alpha_rs: defaults::EDA_ALPHA,
                p_rd: defaults::EDA_ALPHA,
                n_aug: 1,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub methods: Vec<AugMethod>,
    pub lambda_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fractions: defaults::SWEEP_FRACTIONS.to_vec(),
            methods: vec![AugMethod::None, AugMethod::Gda, AugMethod::Eda, AugMethod::Wordnet],
            lambda_grid: defaults::LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub corpus: CorpusConfig,
    pub pairs: PairConfig,
    pub generator: GenTrainConfig,
    pub decoder: DecodeConfig,
    pub classifier: ClassifierConfig,
    pub augment: AugmentConfig,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            corpus: CorpusConfig::default(),
            pairs: PairConfig {
                min_words: defaults::PAIR_MIN_WORDS,
                max_words: defaults::PAIR_MAX_WORDS,
                sim_threshold: defaults::SIM_THRESHOLD,
                ..PairConfig::default()
            },
            generator: GenTrainConfig {
                learning_rate: defaults::LR_GENERATOR,
                ..GenTrainConfig::default()
            },
            decoder: DecodeConfig {
                beam_width: defaults::BEAM_WIDTH,
                temperature: defaults::TEMPERATURE,
                repetition_penalty: defaults::REPETITION_PENALTY,
                ..DecodeConfig::default()
            },
            classifier: ClassifierConfig::default(),
            augment: AugmentConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn in_unit(name: &str, v: f64, allow_zero: bool, allow_one: bool) -> Result<()> {
    let lo_ok = if allow_zero { v >= 0.0 } else { v > 0.0 };
    let hi_ok = if allow_one { v <= 1.0 } else { v < 1.0 };
    if !(lo_ok && hi_ok) {
        bail!("{name} = {v} is out of range");
    }
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        in_unit("corpus.fraction", self.corpus.fraction, false, true)?;
        in_unit("corpus.test_fraction", self.corpus.test_fraction, false, false)?;
        in_unit("corpus.validation_fraction", self.corpus.validation_fraction, true, false)?;
        if !(self.augment.weight > 0.0) {
            bail!("augment.weight must be positive");
        }
        for &f in &self.sweep.fractions {
            in_unit("sweep.fractions", f, false, true)?;
        }
        if self.sweep.lambda_grid.is_empty() || self.sweep.lambda_grid.iter().any(|&l| !(l > 0.0)) {
            bail!("sweep.lambda_grid needs positive weights");
        }
        self.generator.validate()?;
        self.decoder.validate()?;
        self.augment.eda.validate()?;
        Ok(())
    }

    /// Learning rate for the configured head.
    pub fn classifier_lr(&self) -> f64 {
        self.classifier.learning_rate.unwrap_or(match self.classifier.head {
            HeadKind::Vanilla => defaults::LR_VANILLA,
            HeadKind::LabelAttention => defaults::LR_LABEL_ATTENTION,
        })
    }

    pub fn classifier_epochs(&self, fraction: f64) -> usize {
        self.classifier
            .epochs
            .unwrap_or_else(|| ClfTrainConfig::epochs_for_fraction(fraction))
    }
}
