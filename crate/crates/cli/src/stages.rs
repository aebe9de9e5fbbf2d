//! Pipeline stages. Each reads declared upstream artifacts from the run
//! directory (checksums verified), writes its own, and records a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use xmcaug::checkpoint::Checkpoint;
use xmcaug::classifier::{rank_dataset, train, ClassifierModel, ClfTrainConfig, HeadKind};
use xmcaug::corpus::{
    compute_propensities, filter_media_labels, label_frequencies, load_dataset_with, load_label_list, load_pairs,
    make_pairs, save_dataset, save_pairs, split_train_validation, subsample, validate_pairs, write_label_list,
    Dataset, DatasetFormat, LoadOptions, PairConfig, DEFAULT_MEDIA_LABELS,
};
use xmcaug::derive_seed;
use xmcaug::gen_aug::{
    build_augmented_dataset, build_augmented_dataset_with, export_generated, fit_generator, generate_batch,
    import_generated, pair_sequences, perplexity, select_sources, source_examples, AugmentedDataset, GenTrainConfig,
    GeneratorModel, Provenance,
};
use xmcaug::metrics::{evaluate, Metric, MetricReport, DEFAULT_KS};
use xmcaug::rule_aug::{eda_augment, edit_count, wordnet_augment, SynonymLexicon};
use xmcaug::textsim::tokenize;

use crate::config::{AugMethod, PipelineConfig};
use crate::manifest::{artifact, sha256_file, verify_upstream, Artifact, EvalSummary, RunManifest};
use crate::report::{format_fraction, Report};

pub const TRAIN: &str = "train.jsonl";
pub const VALID: &str = "valid.jsonl";
pub const TEST: &str = "test.jsonl";
pub const LABELS: &str = "labels.txt";
pub const PAIRS: &str = "pairs.jsonl";
pub const GENERATOR: &str = "generator.ckpt";
pub const GENERATED: &str = "generated.jsonl";
pub const AUGMENTED: &str = "augmented.jsonl";
pub const CLASSIFIER: &str = "classifier.ckpt";
pub const METRICS: &str = "metrics.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

/// Configuration plus the run directory every stage works in.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub run_dir: PathBuf,
}

struct StageRun<'a> {
    ctx: &'a Ctx,
    stage: &'static str,
    start: Instant,
    inputs: Vec<Artifact>,
}

impl<'a> StageRun<'a> {
    fn seed(&self) -> u64 {
        derive_seed(self.ctx.cfg.seed, self.stage)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.ctx.run_dir.join(rel)
    }

    /// Verifies a run-directory input against its producer's manifest.
    fn input(&mut self, producer: &str, rel: &str) -> Result<PathBuf> {
        let a = verify_upstream(&self.ctx.run_dir, producer, rel)?;
        self.inputs.push(a);
        Ok(self.path(rel))
    }

    /// Records an input that lives outside the run directory.
    fn external(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.exists() {
            bail!("input file {} does not exist", path.display());
        }
        self.inputs.push(Artifact {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(path.to_path_buf())
    }

    fn finish(
        self,
        outputs: &[&str],
        details: serde_json::Value,
        eval: Option<EvalSummary>,
    ) -> Result<RunManifest> {
        let outputs = outputs
            .iter()
            .map(|rel| artifact(&self.ctx.run_dir, rel))
            .collect::<Result<_>>()?;
        let m = RunManifest {
            stage: self.stage.to_string(),
            seed: self.ctx.cfg.seed,
            stage_seed: self.seed(),
            config: self.ctx.cfg.clone(),
            inputs: self.inputs,
            outputs,
            elapsed_ms: self.start.elapsed().as_millis() as u64,
            details,
            eval,
        };
        m.save(&self.ctx.run_dir)?;
        Ok(m)
    }
}

impl Ctx {
    pub fn new(cfg: PipelineConfig, run_dir: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let run_dir = run_dir.into();
        fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
        Ok(Ctx { cfg, run_dir })
    }

    fn begin(&self, stage: &'static str) -> StageRun<'_> {
        log::info!("stage {stage} in {}", self.run_dir.display());
        StageRun {
            ctx: self,
            stage,
            start: Instant::now(),
            inputs: Vec::new(),
        }
    }

    pub fn media_labels(&self) -> Result<Vec<String>> {
        match &self.cfg.paths.media_labels {
            Some(p) => Ok(load_label_list(p)?),
            None => Ok(DEFAULT_MEDIA_LABELS.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn lexicon(&self) -> Result<SynonymLexicon> {
        match (&self.cfg.paths.synonyms, &self.cfg.paths.stopwords) {
            (None, None) => Ok(SynonymLexicon::bundled()),
            (Some(s), Some(w)) => Ok(SynonymLexicon::load(s, w)?),
            _ => bail!("paths.synonyms and paths.stopwords must be given together"),
        }
    }

    fn label_names(&self, run: &mut StageRun<'_>) -> Result<Vec<String>> {
        let p = run.input("ingest", LABELS)?;
        Ok(load_label_list(p)?)
    }

    fn load_split(&self, run: &mut StageRun<'_>, rel: &str, names: &[String]) -> Result<Dataset> {
        let p = run.input("ingest", rel)?;
        let opts = LoadOptions {
            strict: false,
            vocabulary: Some(names.to_vec()),
        };
        Ok(load_dataset_with(p, DatasetFormat::Jsonl, &opts)?)
    }
}

fn names_of(d: &Dataset) -> Vec<String> {
    d.vocabulary().names().to_vec()
}

/// Loads the corpus (and test corpus), fixes one label vocabulary, splits
/// off test data if needed, subsamples the training part and holds out a
/// validation share.
pub fn ingest(ctx: &Ctx) -> Result<RunManifest> {
    let mut run = ctx.begin("ingest");
    let cfg = &ctx.cfg;
    let Some(train_path) = cfg.paths.dataset.clone() else {
        bail!("paths.dataset is not set");
    };
    let train_path = run.external(&train_path)?;
    let test_path = cfg.paths.test_dataset.clone().map(|p| run.external(&p)).transpose()?;
    let grow = LoadOptions {
        strict: cfg.corpus.strict,
        vocabulary: None,
    };
    let first = load_dataset_with(&train_path, DatasetFormat::Jsonl, &grow)?;
    let mut names = names_of(&first);
    if let Some(tp) = &test_path {
        let test = load_dataset_with(tp, DatasetFormat::Jsonl, &grow)?;
        for n in test.vocabulary().names() {
            if first.vocabulary().index_of(n).is_none() {
                names.push(n.clone());
            }
        }
    }
    let fixed = LoadOptions {
        strict: cfg.corpus.strict,
        vocabulary: Some(names.clone()),
    };
    let full = load_dataset_with(&train_path, DatasetFormat::Jsonl, &fixed)?;
    let (train_full, test) = match &test_path {
        Some(tp) => (full, load_dataset_with(tp, DatasetFormat::Jsonl, &fixed)?),
        None => split_train_validation(&full, cfg.corpus.test_fraction, derive_seed(cfg.seed, "split"))?,
    };
    let sub = subsample(&train_full, cfg.corpus.fraction, derive_seed(cfg.seed, "subsample"))?;
    let (train_set, valid) = if cfg.corpus.validation_fraction > 0.0 && sub.len() >= 2 {
        split_train_validation(&sub, cfg.corpus.validation_fraction, derive_seed(cfg.seed, "validation"))?
    } else {
        (sub.clone(), sub.with_examples(Vec::new())?)
    };
    save_dataset(run.path(TRAIN), &train_set)?;
    save_dataset(run.path(VALID), &valid)?;
    save_dataset(run.path(TEST), &test)?;
    write_label_list(run.path(LABELS), &names)?;
    let details = json!({
        "n_train": train_set.len(),
        "n_valid": valid.len(),
        "n_test": test.len(),
        "num_labels": names.len(),
        "fraction": cfg.corpus.fraction,
    });
    run.finish(&[TRAIN, VALID, TEST, LABELS], details, None)
}

/// Label frequency table, most frequent first.
pub fn stats_table(d: &Dataset) -> String {
    let freq = label_frequencies(d);
    let mut rows: Vec<(usize, &str)> = freq
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, d.vocabulary().name(i).unwrap_or("?")))
        .collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(5).max(5);
    let mut out = format!("examples {}\nlabels   {}\n\n", d.len(), d.num_labels());
    out.push_str(&format!("{:<width$}  {:>7}  {:>7}\n", "label", "count", "share"));
    for (count, name) in rows {
        let share = if d.is_empty() { 0.0 } else { 100.0 * count as f64 / d.len() as f64 };
        out.push_str(&format!("{name:<width$}  {count:>7}  {share:>6.2}%\n"));
    }
    out
}

pub fn stats(ctx: &Ctx, input: Option<&Path>) -> Result<String> {
    let d = match input {
        Some(p) => load_dataset_with(p, DatasetFormat::Jsonl, &LoadOptions::default())?,
        None => {
            let mut run = ctx.begin("stats");
            let names = ctx.label_names(&mut run)?;
            ctx.load_split(&mut run, TRAIN, &names)?
        }
    };
    Ok(stats_table(&d))
}

pub fn pairs(ctx: &Ctx) -> Result<RunManifest> {
    let mut run = ctx.begin("pairs");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let media = ctx.media_labels()?;
    let filtered = filter_media_labels(&train_set, &media);
    let cfg = PairConfig {
        seed: run.seed(),
        ..ctx.cfg.pairs.clone()
    };
    let ps = make_pairs(&filtered, &cfg)?;
    save_pairs(run.path(PAIRS), &ps)?;
    let details = json!({ "pairs": ps.len(), "examples_after_media_filter": filtered.len() });
    run.finish(&[PAIRS], details, None)
}

pub fn train_gen(ctx: &Ctx) -> Result<RunManifest> {
    let mut run = ctx.begin("train-gen");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let ppath = run.input("pairs", PAIRS)?;
    let ps = load_pairs(ppath, ctx.cfg.pairs.clone())?;
    validate_pairs(&train_set, &ps)?;
    if ps.is_empty() {
        bail!("no training pairs; lower the similarity or length filters");
    }
    let seqs = pair_sequences(&train_set, &ps, ctx.cfg.corpus.max_words)?;
    let cfg = GenTrainConfig {
        seed: run.seed(),
        ..ctx.cfg.generator.clone()
    };
    let (model, history) = fit_generator(&seqs, &cfg, None)?;
    model.to_checkpoint()?.save(run.path(GENERATOR))?;
    let details = json!({
        "pairs": seqs.len(),
        "vocab": model.vocab.len(),
        "train_loss": history.train_loss,
        "train_perplexity": perplexity(&model, &seqs)?,
    });
    run.finish(&[GENERATOR], details, None)
}

pub fn generate(ctx: &Ctx) -> Result<RunManifest> {
    let mut run = ctx.begin("generate");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let gpath = run.input("train-gen", GENERATOR)?;
    let model = GeneratorModel::from_checkpoint(&Checkpoint::load(gpath)?)?;
    let media = ctx.media_labels()?;
    let sources = select_sources(&train_set, &media, ctx.cfg.augment.sources, ctx.cfg.corpus.max_words);
    let generated: Vec<(String, String)> = generate_batch(&model, &sources, &ctx.cfg.decoder)?
        .into_iter()
        .filter(|(_, t)| !t.is_empty())
        .collect();
    export_generated(run.path(GENERATED), &generated)?;
    let details = json!({ "sources": sources.len(), "generated": generated.len() });
    run.finish(&[GENERATED], details, None)
}

/// Builds the weighted training set for `method`.
pub fn augment(ctx: &Ctx, method: AugMethod, weight: f64) -> Result<RunManifest> {
    if !(weight > 0.0) {
        bail!("weight must be positive, got {weight}");
    }
    let mut run = ctx.begin("augment");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let max_words = ctx.cfg.corpus.max_words;
    let aug = match method {
        AugMethod::None => AugmentedDataset::from_dataset(&train_set),
        AugMethod::Gda => {
            let p = run.input("generate", GENERATED)?;
            let generated = import_generated(p, &train_set, max_words)?;
            build_augmented_dataset(&train_set, &generated, weight)?
        }
        AugMethod::Imported => {
            let Some(p) = ctx.cfg.paths.imported.clone() else {
                bail!("paths.imported is not set");
            };
            let p = run.external(&p)?;
            let generated = import_generated(p, &train_set, max_words)?;
            build_augmented_dataset_with(&train_set, &generated, weight, Provenance::Imported)?
        }
        AugMethod::Eda | AugMethod::Wordnet => {
            let lex = ctx.lexicon()?;
            let media = ctx.media_labels()?;
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed());
            let eda = &ctx.cfg.augment.eda;
            let mut synthetic = Vec::new();
            for e in source_examples(&train_set, &media, ctx.cfg.augment.sources) {
                if method == AugMethod::Eda {
                    synthetic.extend(eda_augment(&e, eda, &lex, &mut rng));
                } else {
                    let n = edit_count(eda.alpha_sr, tokenize(&e.input_text()).len());
                    synthetic.push(wordnet_augment(&e, n, &lex, &mut rng));
                }
            }
            let provenance = if method == AugMethod::Eda { Provenance::Eda } else { Provenance::Wordnet };
            let mut aug = AugmentedDataset::from_dataset(&train_set);
            aug.extend_synthetic(synthetic, weight, provenance)?;
            aug
        }
    };
    aug.save(run.path(AUGMENTED))?;
    let details = json!({
        "method": method,
        "weight": method.is_synthetic().then_some(weight),
        "original": aug.count(Provenance::Original),
        "synthetic": aug.len() - aug.count(Provenance::Original),
    });
    run.finish(&[AUGMENTED], details, None)
}

fn clf_config(ctx: &Ctx, seed: u64) -> ClfTrainConfig {
    let c = &ctx.cfg.classifier;
    ClfTrainConfig {
        learning_rate: ctx.cfg.classifier_lr(),
        epochs: ctx.cfg.classifier_epochs(ctx.cfg.corpus.fraction),
        batch_size: c.batch_size,
        optimizer: c.optimizer,
        seed,
        weight_decay: c.weight_decay,
        dim: c.dim,
        max_words: ctx.cfg.corpus.max_words,
        min_token_freq: c.min_token_freq,
    }
}

pub fn train_clf(ctx: &Ctx, head: Option<HeadKind>) -> Result<RunManifest> {
    let mut run = ctx.begin("train-clf");
    let names = ctx.label_names(&mut run)?;
    let valid = ctx.load_split(&mut run, VALID, &names)?;
    let apath = run.input("augment", AUGMENTED)?;
    let aug = AugmentedDataset::load(apath, names)?;
    let kind = head.unwrap_or(ctx.cfg.classifier.head);
    let cfg = clf_config(ctx, run.seed());
    let validation = (!valid.is_empty()).then_some(&valid);
    let (model, history) = train(&aug, kind, &cfg, validation)?;
    model.to_checkpoint()?.save(run.path(CLASSIFIER))?;
    let details = json!({
        "head": kind,
        "n_train": aug.len(),
        "train_loss": history.train_loss,
        "validation_loss": history.validation_loss,
    });
    run.finish(&[CLASSIFIER], details, None)
}

/// Corpus-mean metrics of `model` on `data`, with propensities fitted on
/// the label counts of `reference`.
pub fn score(ctx: &Ctx, model: &ClassifierModel, data: &Dataset, reference: &Dataset) -> Result<MetricReport> {
    let pm = compute_propensities(
        &label_frequencies(reference),
        reference.len(),
        ctx.cfg.corpus.propensity_a,
        ctx.cfg.corpus.propensity_b,
    )?;
    let kmax = *DEFAULT_KS.iter().max().expect("cut-offs");
    let preds = rank_dataset(model, data, kmax.min(model.num_labels()))?;
    Ok(evaluate(&preds, &pm, &DEFAULT_KS)?)
}

pub fn eval(ctx: &Ctx) -> Result<RunManifest> {
    let mut run = ctx.begin("eval");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let test = ctx.load_split(&mut run, TEST, &names)?;
    let cpath = run.input("train-clf", CLASSIFIER)?;
    let model = ClassifierModel::from_checkpoint(&Checkpoint::load(cpath)?)?;
    let report = score(ctx, &model, &test, &train_set)?;

    let aug_manifest = RunManifest::load(&crate::manifest::manifest_path(&ctx.run_dir, "augment"))?;
    let method: AugMethod = serde_json::from_value(aug_manifest.details["method"].clone())?;
    let weight: Option<f64> = serde_json::from_value(aug_manifest.details["weight"].clone())?;
    let clf_manifest = RunManifest::load(&crate::manifest::manifest_path(&ctx.run_dir, "train-clf"))?;
    let n_train = clf_manifest.details["n_train"].as_u64().unwrap_or(0) as usize;
    let summary = EvalSummary {
        method,
        fraction: ctx.cfg.corpus.fraction,
        n_train,
        weight,
        ks: report.ks.clone(),
        precision: report.mean.family(Metric::Precision).to_vec(),
        ndcg: report.mean.family(Metric::Ndcg).to_vec(),
        psp: report.mean.family(Metric::Psp).to_vec(),
        psndcg: report.mean.family(Metric::Psndcg).to_vec(),
        evaluated: report.evaluated,
        skipped_empty_gold: report.skipped_empty_gold,
    };
    fs::write(run.path(METRICS), serde_json::to_string_pretty(&summary)?)?;
    run.finish(&[METRICS], serde_json::Value::Null, Some(summary))
}

/// PSP@5 on the validation split, used to choose the synthetic weight.
fn validation_psp5(ctx: &Ctx) -> Result<f64> {
    let mut run = ctx.begin("select");
    let names = ctx.label_names(&mut run)?;
    let train_set = ctx.load_split(&mut run, TRAIN, &names)?;
    let valid = ctx.load_split(&mut run, VALID, &names)?;
    let cpath = run.input("train-clf", CLASSIFIER)?;
    let model = ClassifierModel::from_checkpoint(&Checkpoint::load(cpath)?)?;
    let report = score(ctx, &model, &valid, &train_set)?;
    Ok(report.get(Metric::Psp, 5).expect("k = 5 evaluated"))
}

/// Every stage for one (fraction, method) cell. With several candidate
/// weights and a validation split, the weight with the best validation
/// PSP@5 is kept (earliest on ties) and the cell is retrained with it.
pub fn run_cell(ctx: &Ctx) -> Result<EvalSummary> {
    let method = ctx.cfg.augment.method;
    ingest(ctx)?;
    if method == AugMethod::Gda {
        pairs(ctx)?;
        train_gen(ctx)?;
        generate(ctx)?;
    }
    let grid = &ctx.cfg.sweep.lambda_grid;
    let ingest_m = RunManifest::load(&crate::manifest::manifest_path(&ctx.run_dir, "ingest"))?;
    let has_valid = ingest_m.details["n_valid"].as_u64().unwrap_or(0) > 0;
    let weight = if method.is_synthetic() && grid.len() > 1 && has_valid {
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &w in grid {
            augment(ctx, method, w)?;
            train_clf(ctx, None)?;
            let v = validation_psp5(ctx)?;
            log::info!("{} weight {w}: validation PSP@5 {v:.4}", method.slug());
            if v > best.0 {
                best = (v, w);
            }
        }
        best.1
    } else if method.is_synthetic() {
        grid[0]
    } else {
        ctx.cfg.augment.weight
    };
    augment(ctx, method, weight)?;
    train_clf(ctx, None)?;
    Ok(eval(ctx)?.eval.expect("eval summary"))
}

pub fn cell_dir(run_dir: &Path, method: AugMethod, fraction: f64) -> PathBuf {
    let pct = format_fraction(fraction).trim_end_matches('%').replace('.', "_");
    run_dir.join("cells").join(format!("{}-{pct}", method.slug()))
}

/// Runs the fraction × method grid (cells in parallel) and writes the
/// combined report.
pub fn sweep(ctx: &Ctx) -> Result<Report> {
    let start = Instant::now();
    let cells: Vec<(f64, AugMethod)> = ctx
        .cfg
        .sweep
        .fractions
        .iter()
        .flat_map(|&f| ctx.cfg.sweep.methods.iter().map(move |&m| (f, m)))
        .collect();
    let summaries: Vec<EvalSummary> = cells
        .par_iter()
        .map(|&(fraction, method)| {
            let mut cfg = ctx.cfg.clone();
            cfg.corpus.fraction = fraction;
            cfg.augment.method = method;
            let dir = cell_dir(&ctx.run_dir, method, fraction);
            let cell = Ctx::new(cfg, dir)?;
            run_cell(&cell).with_context(|| format!("sweep cell {} at {}", method.slug(), format_fraction(fraction)))
        })
        .collect::<Result<_>>()?;
    let report = Report::new(summaries)?;
    write_report(&ctx.run_dir, &report)?;
    let outputs = [REPORT_CSV, REPORT_TXT]
        .iter()
        .map(|rel| artifact(&ctx.run_dir, rel))
        .collect::<Result<_>>()?;
    RunManifest {
        stage: "sweep".into(),
        seed: ctx.cfg.seed,
        stage_seed: derive_seed(ctx.cfg.seed, "sweep"),
        config: ctx.cfg.clone(),
        inputs: Vec::new(),
        outputs,
        elapsed_ms: start.elapsed().as_millis() as u64,
        details: json!({ "cells": cells.len() }),
        eval: None,
    }
    .save(&ctx.run_dir)?;
    Ok(report)
}

pub fn write_report(run_dir: &Path, report: &Report) -> Result<()> {
    fs::write(run_dir.join(REPORT_CSV), report.to_csv()?)?;
    fs::write(run_dir.join(REPORT_TXT), report.to_text())?;
    Ok(())
}

/// Evaluation manifests of the run directory and of its sweep cells.
pub fn find_eval_manifests(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let own = crate::manifest::manifest_path(run_dir, "eval");
    if own.exists() {
        out.push(own);
    }
    let cells = run_dir.join("cells");
    if cells.is_dir() {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&cells)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        dirs.sort();
        for d in dirs {
            let m = crate::manifest::manifest_path(&d, "eval");
            if m.exists() {
                out.push(m);
            }
        }
    }
    Ok(out)
}

pub fn report(run_dir: &Path, manifests: &[PathBuf]) -> Result<Report> {
    let paths = if manifests.is_empty() {
        find_eval_manifests(run_dir)?
    } else {
        manifests.to_vec()
    };
    let mut rows = Vec::new();
    for p in &paths {
        let m = RunManifest::load(p)?;
        let Some(e) = m.eval else {
            bail!("{} is not an evaluation manifest", p.display());
        };
        rows.push(e);
    }
    let report = Report::new(rows)?;
    fs::create_dir_all(run_dir)?;
    write_report(run_dir, &report)?;
    Ok(report)
}
