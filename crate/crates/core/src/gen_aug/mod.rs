//! Generative augmentation: a conditional sequence model trained on
//! same-label-set pairs, beam-search decoding, and assembly of weighted
//! augmented datasets.

mod augmented;
mod decode;
mod model;
mod pipeline;
mod train;

pub use augmented::{
    build_augmented_dataset, build_augmented_dataset_with, export_generated, import_generated,
    AugmentedDataset, AugmentedExample, Provenance, DEFAULT_LAMBDA,
};
pub use decode::{
    adjust_logits, beam_search, generate, generate_batch, generate_from_tokens, generate_ids, greedy_ids,
    DecodeConfig, Finished,
};
pub use model::{
    forward_logits, gradients, next_token_log_probs, sequence_loss, sequence_loss_and_gradients, Block,
    DecodeState, EncodedPair, GenParams, GenShape, GeneratorModel, BOS, CHECKPOINT_KIND, EOS, SEP, SPECIALS,
    UNK,
};
pub use pipeline::{run_gda, select_sources, source_examples, GdaConfig, GdaOutput, SourceSelection};
pub use train::{fit_generator, pair_sequences, perplexity, GenHistory, GenTrainConfig};

#[cfg(test)]
mod tests;
