//! Baseline vs generative augmentation on the synthetic long-tail corpus.
//!
//! cargo run --release -p xmcaug --example long_tail -- [seeds=5] [gen_epochs=12] [gen_dim=64] ...
//!
//! Options: seeds, gen_epochs, gen_dim, gen_layers, gen_lr, penalty,
//! clf_epochs, clf_lr, lambda.

use std::time::Instant;

use xmcaug::experiments::{long_tail_trial, mean_std, LongTailConfig};
use xmcaug::metrics::Metric;

fn main() -> xmcaug::Result<()> {
    let mut seeds = 5u64;
    let mut cfg = LongTailConfig::default();
    for arg in std::env::args().skip(1) {
        let (key, value) = arg.split_once('=').expect("arguments look like key=value");
        let num = |v: &str| -> f64 { v.parse().expect("numeric value") };
        match key {
            "seeds" => seeds = num(value) as u64,
            "gen_epochs" => cfg.gda.train.epochs = num(value) as usize,
            "gen_dim" => {
                cfg.gda.train.dim = num(value) as usize;
                cfg.gda.train.ff_dim = 2 * cfg.gda.train.dim;
            }
            "gen_layers" => cfg.gda.train.layers = num(value) as usize,
            "gen_lr" => cfg.gda.train.learning_rate = num(value),
            "penalty" => cfg.gda.decode.repetition_penalty = num(value),
            "clf_epochs" => cfg.classifier.epochs = num(value) as usize,
            "clf_lr" => cfg.classifier.learning_rate = num(value),
            "lambda" => cfg.lambda = num(value),
            _ => panic!("unknown option {key}"),
        }
    }
    let mut gains = Vec::new();
    for seed in 0..seeds {
        let t0 = Instant::now();
        let t = long_tail_trial(&cfg, seed)?;
        println!(
            "seed {seed}: pairs {} gen-loss {:.3} generated {} fidelity {:.3} | P@5 {:.4} -> {:.4} | PSP@5 {:.4} -> {:.4} | {:.1}s",
            t.pairs,
            t.generator_loss,
            t.generated,
            t.keyword_fidelity,
            t.baseline.get(Metric::Precision, 5).unwrap(),
            t.augmented.get(Metric::Precision, 5).unwrap(),
            t.baseline.get(Metric::Psp, 5).unwrap(),
            t.augmented.get(Metric::Psp, 5).unwrap(),
            t0.elapsed().as_secs_f64()
        );
        for (id, text) in &t.samples {
            println!("  {id}: {text}");
        }
        gains.push(t.psp5_gain());
    }
    let (mean, sd) = mean_std(&gains);
    println!("PSP@5 improvement: {mean:.4} ± {sd:.4}");
    Ok(())
}
