//! Staged command-line pipeline: ingest a corpus, build pairs, train the
//! generator, generate, augment, train and evaluate a classifier, and
//! sweep training fractions × augmentation methods into one report.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use xmcaug::classifier::HeadKind;

use crate::config::{AugMethod, PipelineConfig};
use crate::stages::Ctx;

#[derive(Debug, Parser)]
#[command(name = "xmcaug", version, about = "Augmentation experiments for extreme multi-label text classification")]
pub struct Cli {
    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory holding artifacts and manifests.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, split and subsample the corpus.
    Ingest {
        /// Training corpus (JSONL); overrides paths.dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Test corpus (JSONL); overrides paths.test_dataset.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Share of the training data to keep.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Print label frequencies.
    Stats {
        /// Corpus to describe instead of the run's training split.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build same-label-set training pairs.
    Pairs,
    /// Train the generator on the pairs.
    TrainGen,
    /// Generate one text per selected source example.
    Generate,
    /// Assemble the weighted training set.
    Augment {
        #[arg(long, value_enum)]
        method: Option<AugMethod>,
        /// Weight of synthetic examples.
        #[arg(long)]
        weight: Option<f64>,
    },
    /// Train the classifier on the augmented set.
    TrainClf {
        /// `vanilla` or `label-attention`.
        #[arg(long)]
        head: Option<HeadKind>,
    },
    /// Evaluate the classifier on the test split.
    Eval,
    /// Run the fraction × method grid and write the report.
    Sweep,
    /// Combine evaluation manifests into report.csv and report.txt.
    Report {
        /// Manifests to include; defaults to every eval manifest of the run.
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_dir(cli: &Cli, cfg: &PipelineConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"))
}

/// Executes one command; everything user-facing goes to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let dir = run_dir(&cli, &cfg);
    match cli.command {
        Command::Ingest { dataset, test, fraction } => {
            if let Some(d) = dataset {
                cfg.paths.dataset = Some(d);
            }
            if let Some(t) = test {
                cfg.paths.test_dataset = Some(t);
            }
            if let Some(f) = fraction {
                cfg.corpus.fraction = f;
            }
            let m = stages::ingest(&Ctx::new(cfg, dir)?)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::Stats { input } => {
            let ctx = Ctx::new(cfg, dir)?;
            print!("{}", stages::stats(&ctx, input.as_deref())?);
        }
        Command::Pairs => {
            let m = stages::pairs(&Ctx::new(cfg, dir)?)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::TrainGen => {
            let m = stages::train_gen(&Ctx::new(cfg, dir)?)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::Generate => {
            let m = stages::generate(&Ctx::new(cfg, dir)?)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::Augment { method, weight } => {
            if let Some(m) = method {
                cfg.augment.method = m;
            }
            if let Some(w) = weight {
                cfg.augment.weight = w;
            }
            let (method, weight) = (cfg.augment.method, cfg.augment.weight);
            let m = stages::augment(&Ctx::new(cfg, dir)?, method, weight)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::TrainClf { head } => {
            let m = stages::train_clf(&Ctx::new(cfg, dir)?, head)?;
            println!("{}", serde_json::to_string(&m.details)?);
        }
        Command::Eval => {
            let ctx = Ctx::new(cfg, dir)?;
            stages::eval(&ctx)?;
            print!("{}", stages::report(&ctx.run_dir, &[manifest::manifest_path(&ctx.run_dir, "eval")])?.to_text());
        }
        Command::Sweep => {
            if cfg.sweep.fractions.is_empty() || cfg.sweep.methods.is_empty() {
                bail!("sweep needs at least one fraction and one method");
            }
            print!("{}", stages::sweep(&Ctx::new(cfg, dir)?)?.to_text());
        }
        Command::Report { manifests } => {
            print!("{}", stages::report(&dir, &manifests)?.to_text());
        }
        Command::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}
