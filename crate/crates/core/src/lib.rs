//! Data augmentation for extreme multi-label text classification.
//!
//! The crate covers the full desk-scale loop: corpus handling and
//! same-label-set pairing, rule-based (EDA, synonym-only) and generative
//! label-invariant augmentation, pooled and label-attention classifiers
//! trained on weighted augmented data, and propensity-scored ranking metrics.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod gen_aug;
pub mod metrics;
pub mod nn;
pub mod rule_aug;
pub mod synth;
pub mod textsim;
pub mod vocab;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Derives a stage-specific seed from a global seed and a stage name.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}
