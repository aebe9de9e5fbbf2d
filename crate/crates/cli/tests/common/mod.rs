#![allow(dead_code)]

use std::path::{Path, PathBuf};

use xmcaug::corpus::save_dataset;
use xmcaug::gen_aug::SourceSelection;
use xmcaug::synth::{zipf_corpus, ZipfConfig};
use xmcaug_cli::config::{AugMethod, PipelineConfig};

/// Writes a small Zipf corpus as train.jsonl / test.jsonl under `dir`.
pub fn write_corpus(dir: &Path, num_train: usize, seed: u64) -> (PathBuf, PathBuf) {
    let c = zipf_corpus(&ZipfConfig {
        num_labels: 30,
        num_train,
        num_test: num_train / 4,
        parent_from: 10,
        seed,
        ..ZipfConfig::default()
    })
    .unwrap();
    let train = dir.join("corpus-train.jsonl");
    let test = dir.join("corpus-test.jsonl");
    save_dataset(&train, &c.train).unwrap();
    save_dataset(&test, &c.test).unwrap();
    (train, test)
}

/// Pipeline settings small enough for tests on one core.
pub fn small_config(train: &Path, test: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.dataset = Some(train.to_path_buf());
    cfg.paths.test_dataset = Some(test.to_path_buf());
    cfg.pairs.max_pairs_per_group = 4;
    cfg.generator.learning_rate = 3e-3;
    cfg.generator.epochs = 1;
    cfg.generator.batch_size = 16;
    cfg.generator.dim = 16;
    cfg.generator.ff_dim = 32;
    cfg.generator.layers = 1;
    cfg.generator.max_positions = 64;
    cfg.decoder.beam_width = 2;
    cfg.decoder.max_len = 20;
    cfg.classifier.learning_rate = Some(0.01);
    cfg.classifier.epochs = Some(3);
    cfg.classifier.dim = 16;
    cfg.augment.sources = SourceSelection::TailBelow(10);
    cfg.sweep.lambda_grid = vec![0.5];
    cfg.sweep.methods = vec![AugMethod::None, AugMethod::Eda];
    cfg
}
