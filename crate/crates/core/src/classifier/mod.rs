//! Multi-label classifiers over a shared token encoder.
//!
//! The encoder maps `[CLS] tokens [SEP]` to token rows `H` (an embedding
//! lookup) and to a pooled vector `e = tanh(A * mean(H) + c)`. The vanilla
//! head scores labels from `e`; the label-attention head lets each label
//! softmax-attend over the rows of `H` and scores the attended vector.

mod backward;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_input_text, Dataset, Example};
use crate::metrics::RankedPrediction;
use crate::error::{Error, Result};
use crate::nn::{self, mut1, mut2, view1, view2, Parameters, TensorRef};
use crate::textsim::TokenSequence;
use crate::vocab::TokenVocab;

pub use backward::{example_loss_and_gradients, gradients, Gradients, Instance};
pub use train::{train, ClfTrainConfig, TrainHistory, WeightedExample};

/// Probability clamp applied inside the loss.
pub const PROB_EPS: f64 = 1e-12;

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Vanilla,
    LabelAttention,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Vanilla => "vanilla",
            HeadKind::LabelAttention => "label-attention",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(HeadKind::Vanilla),
            "label-attention" | "la" => Ok(HeadKind::LabelAttention),
            other => Err(Error::invalid(format!("unknown head kind `{other}`"))),
        }
    }
}

/// Token embeddings plus the pooling affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `V x d`
    pub embedding: Array2<f64>,
    /// `d x d`, applied as `pool_weight . mean`
    pub pool_weight: Array2<f64>,
    pub pool_bias: Array1<f64>,
    pub cls_id: usize,
    pub sep_id: usize,
}

impl EncoderParams {
    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaHead {
    /// `K x d`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelAttentionHead {
    /// Attention vectors `w_k`, `K x d`.
    pub attention: Array2<f64>,
    /// Output maps `f_k`, `K x d`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Vanilla(VanillaHead),
    LabelAttention(LabelAttentionHead),
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Vanilla(_) => HeadKind::Vanilla,
            Head::LabelAttention(_) => HeadKind::LabelAttention,
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            Head::Vanilla(h) => h.bias.len(),
            Head::LabelAttention(h) => h.bias.len(),
        }
    }
}

/// Encoder and head parameters; the same shape doubles as a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub encoder: EncoderParams,
    pub head: Head,
}

impl ClassifierParams {
    /// Random initialisation with small Gaussian weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        kind: HeadKind,
        vocab_size: usize,
        dim: usize,
        num_labels: usize,
        cls_id: usize,
        sep_id: usize,
        rng: &mut R,
    ) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let encoder = EncoderParams {
            embedding: nn::normal2(vocab_size, dim, std, rng),
            pool_weight: Array2::eye(dim),
            pool_bias: Array1::zeros(dim),
            cls_id,
            sep_id,
        };
        let head = match kind {
            HeadKind::Vanilla => Head::Vanilla(VanillaHead {
                weight: nn::normal2(num_labels, dim, 0.01, rng),
                bias: Array1::zeros(num_labels),
            }),
            HeadKind::LabelAttention => Head::LabelAttention(LabelAttentionHead {
                attention: nn::normal2(num_labels, dim, 0.01, rng),
                weight: nn::normal2(num_labels, dim, 0.01, rng),
                bias: Array1::zeros(num_labels),
            }),
        };
        ClassifierParams { encoder, head }
    }

    pub fn zeros(
        kind: HeadKind,
        vocab_size: usize,
        dim: usize,
        num_labels: usize,
        cls_id: usize,
        sep_id: usize,
    ) -> Self {
        let encoder = EncoderParams {
            embedding: Array2::zeros((vocab_size, dim)),
            pool_weight: Array2::zeros((dim, dim)),
            pool_bias: Array1::zeros(dim),
            cls_id,
            sep_id,
        };
        let head = match kind {
            HeadKind::Vanilla => Head::Vanilla(VanillaHead {
                weight: Array2::zeros((num_labels, dim)),
                bias: Array1::zeros(num_labels),
            }),
            HeadKind::LabelAttention => Head::LabelAttention(LabelAttentionHead {
                attention: Array2::zeros((num_labels, dim)),
                weight: Array2::zeros((num_labels, dim)),
                bias: Array1::zeros(num_labels),
            }),
        };
        ClassifierParams { encoder, head }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}

impl Parameters for ClassifierParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let e = &self.encoder;
        let mut out = vec![
            view2("encoder.embedding", &e.embedding),
            view2("encoder.pool_weight", &e.pool_weight),
            view1("encoder.pool_bias", &e.pool_bias),
        ];
        match &self.head {
            Head::Vanilla(h) => {
                out.push(view2("head.weight", &h.weight));
                out.push(view1("head.bias", &h.bias));
            }
            Head::LabelAttention(h) => {
                out.push(view2("head.attention", &h.attention));
                out.push(view2("head.weight", &h.weight));
                out.push(view1("head.bias", &h.bias));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let e = &mut self.encoder;
        let mut out = vec![
            mut2("encoder.embedding", &mut e.embedding),
            mut2("encoder.pool_weight", &mut e.pool_weight),
            mut1("encoder.pool_bias", &mut e.pool_bias),
        ];
        match &mut self.head {
            Head::Vanilla(h) => {
                out.push(mut2("head.weight", &mut h.weight));
                out.push(mut1("head.bias", &mut h.bias));
            }
            Head::LabelAttention(h) => {
                out.push(mut2("head.attention", &mut h.attention));
                out.push(mut2("head.weight", &mut h.weight));
                out.push(mut1("head.bias", &mut h.bias));
            }
        }
        out
    }
}

/// Token ids for `[CLS] tokens [SEP]`, unknown words mapped to `[UNK]`.
pub fn token_ids(tokens: &TokenSequence, vocab: &TokenVocab, encoder: &EncoderParams) -> Vec<usize> {
    std::iter::once(encoder.cls_id)
        .chain(tokens.iter().map(|t| vocab.id(t)))
        .chain(std::iter::once(encoder.sep_id))
        .collect()
}

/// Embedding rows `H` (`T x d`) and the pooled vector `e` for token ids.
pub fn encode_ids(ids: &[usize], encoder: &EncoderParams) -> (Array2<f64>, Array1<f64>) {
    let h = encoder.embedding.select(Axis(0), ids);
    let mean = h.mean_axis(Axis(0)).expect("at least [CLS] and [SEP]");
    let e = (encoder.pool_weight.dot(&mean) + &encoder.pool_bias).mapv(f64::tanh);
    (h, e)
}

/// Encodes a token sequence; `T = len + 2` rows including `[CLS]` and `[SEP]`.
pub fn encode(tokens: &TokenSequence, vocab: &TokenVocab, encoder: &EncoderParams) -> (Array2<f64>, Array1<f64>) {
    encode_ids(&token_ids(tokens, vocab, encoder), encoder)
}

fn vanilla_scores(e: &Array1<f64>, head: &VanillaHead) -> Result<Array1<f64>> {
    if head.weight.ncols() != e.len() {
        return Err(Error::DimensionMismatch(format!(
            "vanilla head expects d = {}, got {}",
            head.weight.ncols(),
            e.len()
        )));
    }
    Ok(head.weight.dot(e) + &head.bias)
}

/// `y_k = sigmoid(w_k . e + b_k)`.
pub fn vanilla_forward(e: &Array1<f64>, head: &VanillaHead) -> Result<Array1<f64>> {
    Ok(vanilla_scores(e, head)?.mapv(nn::sigmoid))
}

/// Attention weights (`T x K`, each column a softmax over tokens), attended
/// vectors (`K x d`) and label scores.
pub fn label_attention_parts(
    h: &Array2<f64>,
    head: &LabelAttentionHead,
) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>)> {
    if h.nrows() == 0 {
        return Err(Error::Empty("token rows".into()));
    }
    if head.attention.ncols() != h.ncols() || head.weight.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "label attention expects d = {}, got {}",
            head.attention.ncols(),
            h.ncols()
        )));
    }
    let mut alpha = h.dot(&head.attention.t());
    for mut col in alpha.columns_mut() {
        let mut buf = col.to_vec();
        nn::softmax_in_place(&mut buf);
        col.assign(&Array1::from(buf));
    }
    let m = alpha.t().dot(h);
    let scores = (&m * &head.weight).sum_axis(Axis(1)) + &head.bias;
    Ok((alpha, m, scores))
}

/// `(alpha, m, y)` with `y_k = sigmoid(f_k . m_k + b_k)`.
pub fn label_attention_forward(
    h: &Array2<f64>,
    head: &LabelAttentionHead,
) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>)> {
    let (alpha, m, s) = label_attention_parts(h, head)?;
    Ok((alpha, m, s.mapv(nn::sigmoid)))
}

/// Raw label scores (pre-sigmoid) for already-built token ids.
pub fn scores_for_ids(params: &ClassifierParams, ids: &[usize]) -> Result<Array1<f64>> {
    let (h, e) = encode_ids(ids, &params.encoder);
    match &params.head {
        Head::Vanilla(head) => vanilla_scores(&e, head),
        Head::LabelAttention(head) => Ok(label_attention_parts(&h, head)?.2),
    }
}

/// `lambda * mean_k BCE(y_hat_k, y_k)` with probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn weighted_bce_loss(y_hat: &[f64], y: &[f64], lambda: f64) -> f64 {
    assert_eq!(y_hat.len(), y.len(), "prediction and target lengths differ");
    if y.is_empty() {
        return 0.0;
    }
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    lambda * total / y.len() as f64
}

/// Indices of the `k` largest scores, ties broken by lower index.
pub fn rank_scores(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Trained classifier with everything needed to score raw examples.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub vocab: TokenVocab,
    pub params: ClassifierParams,
    pub label_names: Vec<String>,
    pub max_words: usize,
    pub config: ClfTrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    head: HeadKind,
    dim: usize,
    num_labels: usize,
    max_words: usize,
    cls_id: usize,
    sep_id: usize,
    vocab: TokenVocab,
    label_names: Vec<String>,
    config: ClfTrainConfig,
}

pub const CHECKPOINT_KIND: &str = "xmcaug-classifier";

impl ClassifierModel {
    pub fn kind(&self) -> HeadKind {
        self.params.head.kind()
    }

    pub fn num_labels(&self) -> usize {
        self.params.head.num_labels()
    }

    pub fn ids(&self, example: &Example) -> Vec<usize> {
        token_ids(&build_input_text(example, self.max_words), &self.vocab, &self.params.encoder)
    }

    pub fn scores(&self, example: &Example) -> Result<Array1<f64>> {
        scores_for_ids(&self.params, &self.ids(example))
    }

    pub fn probabilities(&self, example: &Example) -> Result<Array1<f64>> {
        Ok(self.scores(example)?.mapv(nn::sigmoid))
    }

    pub fn to_checkpoint(&self) -> Result<crate::checkpoint::Checkpoint> {
        let meta = ClassifierMeta {
            head: self.kind(),
            dim: self.params.encoder.dim(),
            num_labels: self.num_labels(),
            max_words: self.max_words,
            cls_id: self.params.encoder.cls_id,
            sep_id: self.params.encoder.sep_id,
            vocab: self.vocab.clone(),
            label_names: self.label_names.clone(),
            config: self.config.clone(),
        };
        Ok(crate::checkpoint::Checkpoint::from_parameters(
            CHECKPOINT_KIND,
            serde_json::to_value(meta)?,
            &self.params,
        ))
    }

    pub fn from_checkpoint(ck: &crate::checkpoint::Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a classifier, found `{}`", ck.kind)));
        }
        let meta: ClassifierMeta = serde_json::from_value(ck.meta.clone())?;
        let mut params = ClassifierParams::zeros(
            meta.head,
            meta.vocab.len(),
            meta.dim,
            meta.num_labels,
            meta.cls_id,
            meta.sep_id,
        );
        ck.restore_into(&mut params)?;
        Ok(ClassifierModel {
            vocab: meta.vocab,
            params,
            label_names: meta.label_names,
            max_words: meta.max_words,
            config: meta.config,
        })
    }
}

/// Top-`k` labels by predicted probability, ties broken by label index.
pub fn predict_topk(model: &ClassifierModel, example: &Example, k: usize) -> Result<Vec<(usize, f64)>> {
    let k_total = model.num_labels();
    if k > k_total {
        return Err(Error::invalid(format!("k = {k} exceeds the {k_total} labels")));
    }
    let scores = model.scores(example)?;
    let s = scores.as_slice().expect("contiguous");
    Ok(rank_scores(s, k).into_iter().map(|l| (l, nn::sigmoid(s[l]))).collect())
}

/// Top-`k` rankings for every example of `dataset`, paired with its gold
/// labels, in dataset order.
pub fn rank_dataset(model: &ClassifierModel, dataset: &Dataset, k: usize) -> Result<Vec<RankedPrediction>> {
    use rayon::prelude::*;
    dataset
        .examples()
        .par_iter()
        .map(|e| {
            let ranked = predict_topk(model, e, k)?.into_iter().map(|(l, _)| l).collect();
            RankedPrediction::new(ranked, e.labels.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests;
