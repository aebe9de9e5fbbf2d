//! A small causal self-attention language model over `[BOS] source [SEP]
//! target [EOS]`, with a hand-written backward pass and an incremental
//! (key/value cached) decoding step.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::GenTrainConfig;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{self, mut1, mut2, normal2, view1, view2, Parameters, TensorRef};
use crate::vocab::TokenVocab;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = "<sep>";
pub const SPECIALS: [&str; 4] = [UNK, BOS, EOS, SEP];

pub const CHECKPOINT_KIND: &str = "xmcaug-generator";

const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Block {
    fn zeros(d: usize, f: usize) -> Self {
        Block {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub blocks: Vec<Block>,
    pub wout: Array2<f64>,
    pub bout: Array1<f64>,
}

/// Shape of a generator: vocabulary, width, feed-forward width, depth and
/// maximum sequence length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenShape {
    pub vocab: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub layers: usize,
    pub max_positions: usize,
}

impl GenParams {
    pub fn zeros(shape: GenShape) -> Self {
        let GenShape { vocab, dim, ff_dim, layers, max_positions } = shape;
        GenParams {
            tok_emb: Array2::zeros((vocab, dim)),
            pos_emb: Array2::zeros((max_positions, dim)),
            blocks: (0..layers).map(|_| Block::zeros(dim, ff_dim)).collect(),
            wout: Array2::zeros((dim, vocab)),
            bout: Array1::zeros(vocab),
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: GenShape, rng: &mut R) -> Self {
        let GenShape { vocab, dim, ff_dim, layers, max_positions } = shape;
        let sd = 1.0 / (dim as f64).sqrt();
        let sf = 1.0 / (ff_dim as f64).sqrt();
        // Residual branches start small so the stack is close to identity.
        let branch = 0.5 / (layers.max(1) as f64).sqrt();
        GenParams {
            tok_emb: normal2(vocab, dim, 0.5, rng),
            pos_emb: normal2(max_positions, dim, 0.1, rng),
            blocks: (0..layers)
                .map(|_| Block {
                    wq: normal2(dim, dim, sd, rng),
                    wk: normal2(dim, dim, sd, rng),
                    wv: normal2(dim, dim, sd, rng),
                    wo: normal2(dim, dim, sd * branch, rng),
                    w1: normal2(dim, ff_dim, sd, rng),
                    b1: Array1::zeros(ff_dim),
                    w2: normal2(ff_dim, dim, sf * branch, rng),
                    b2: Array1::zeros(dim),
                })
                .collect(),
            wout: normal2(dim, vocab, 0.02, rng),
            bout: Array1::zeros(vocab),
        }
    }

    pub fn shape(&self) -> GenShape {
        GenShape {
            vocab: self.tok_emb.nrows(),
            dim: self.tok_emb.ncols(),
            ff_dim: self.blocks.first().map_or(0, |b| b.b1.len()),
            layers: self.blocks.len(),
            max_positions: self.pos_emb.nrows(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GenParams::zeros(self.shape())
    }

    fn scale(&self) -> f64 {
        1.0 / (self.tok_emb.ncols() as f64).sqrt()
    }
}

impl Parameters for GenParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![view2("tok_emb", &self.tok_emb), view2("pos_emb", &self.pos_emb)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(view2(&format!("block{i}.wq"), &b.wq));
            out.push(view2(&format!("block{i}.wk"), &b.wk));
            out.push(view2(&format!("block{i}.wv"), &b.wv));
            out.push(view2(&format!("block{i}.wo"), &b.wo));
            out.push(view2(&format!("block{i}.w1"), &b.w1));
            out.push(view1(&format!("block{i}.b1"), &b.b1));
            out.push(view2(&format!("block{i}.w2"), &b.w2));
            out.push(view1(&format!("block{i}.b2"), &b.b2));
        }
        out.push(view2("wout", &self.wout));
        out.push(view1("bout", &self.bout));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![mut2("tok_emb", &mut self.tok_emb), mut2("pos_emb", &mut self.pos_emb)];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push(mut2(&format!("block{i}.wq"), &mut b.wq));
            out.push(mut2(&format!("block{i}.wk"), &mut b.wk));
            out.push(mut2(&format!("block{i}.wv"), &mut b.wv));
            out.push(mut2(&format!("block{i}.wo"), &mut b.wo));
            out.push(mut2(&format!("block{i}.w1"), &mut b.w1));
            out.push(mut1(&format!("block{i}.b1"), &mut b.b1));
            out.push(mut2(&format!("block{i}.w2"), &mut b.w2));
            out.push(mut1(&format!("block{i}.b2"), &mut b.b2));
        }
        out.push(mut2("wout", &mut self.wout));
        out.push(mut1("bout", &mut self.bout));
        out
    }
}

struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    c: Array2<f64>,
    x1: Array2<f64>,
    h: Array2<f64>,
}

fn block_forward(b: &Block, x: Array2<f64>, scale: f64) -> (Array2<f64>, BlockCache) {
    let n = x.nrows();
    let q = x.dot(&b.wq);
    let k = x.dot(&b.wk);
    let v = x.dot(&b.wv);
    let mut a = q.dot(&k.t()) * scale;
    for i in 0..n {
        let mut row = a.row_mut(i);
        let row = row.as_slice_mut().expect("standard layout");
        nn::softmax_in_place(&mut row[..=i]);
        row[i + 1..].fill(0.0);
    }
    let c = a.dot(&v);
    let x1 = &x + &c.dot(&b.wo);
    let h = (x1.dot(&b.w1) + &b.b1).mapv(f64::tanh);
    let x2 = &x1 + &h.dot(&b.w2) + &b.b2;
    (x2, BlockCache { x, q, k, v, a, c, x1, h })
}

/// Final hidden states and per-block caches for a full sequence.
fn forward_hidden(p: &GenParams, ids: &[usize]) -> (Array2<f64>, Vec<BlockCache>) {
    let d = p.tok_emb.ncols();
    let mut x = Array2::zeros((ids.len(), d));
    for (t, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(t);
        row += &p.tok_emb.row(id);
        row += &p.pos_emb.row(t);
    }
    let mut caches = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let (next, cache) = block_forward(b, x, p.scale());
        caches.push(cache);
        x = next;
    }
    (x, caches)
}

/// Logits for every position of `ids` (n × V).
pub fn forward_logits(p: &GenParams, ids: &[usize]) -> Array2<f64> {
    let (x, _) = forward_hidden(p, ids);
    x.dot(&p.wout) + &p.bout
}

/// Summed cross-entropy of the tokens after position `sep_pos`, i.e. of the
/// target and the closing EOS, under teacher forcing.
pub fn sequence_loss(p: &GenParams, ids: &[usize], sep_pos: usize) -> f64 {
    let logits = forward_logits(p, ids);
    (sep_pos..ids.len() - 1)
        .map(|i| -nn::log_softmax(logits.row(i))[ids[i + 1]])
        .sum()
}

/// Adds `scale ·` the gradient of [`sequence_loss`] into `g`; returns the
/// unscaled summed loss.
pub fn sequence_loss_and_gradients(
    p: &GenParams,
    ids: &[usize],
    sep_pos: usize,
    scale: f64,
    g: &mut GenParams,
) -> f64 {
    let n = ids.len();
    let sc = p.scale();
    let (xl, caches) = forward_hidden(p, ids);
    let logits = xl.dot(&p.wout) + &p.bout;

    let mut dlogits = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for i in sep_pos..n - 1 {
        let lp = nn::log_softmax(logits.row(i));
        let target = ids[i + 1];
        loss -= lp[target];
        let mut row = dlogits.row_mut(i);
        row.assign(&lp.mapv(|v| v.exp() * scale));
        row[target] -= scale;
    }

    g.wout += &xl.t().dot(&dlogits);
    g.bout += &dlogits.sum_axis(Axis(0));
    let mut dx = dlogits.dot(&p.wout.t());

    for (b, (gb, cache)) in p.blocks.iter().zip(g.blocks.iter_mut().zip(&caches)).rev() {
        // x2 = x1 + tanh(x1 W1 + b1) W2 + b2
        gb.w2 += &cache.h.t().dot(&dx);
        gb.b2 += &dx.sum_axis(Axis(0));
        let dh = dx.dot(&b.w2.t());
        let dpre = &dh * &cache.h.mapv(|h| 1.0 - h * h);
        gb.w1 += &cache.x1.t().dot(&dpre);
        gb.b1 += &dpre.sum_axis(Axis(0));
        let dx1 = dx + dpre.dot(&b.w1.t());

        // x1 = x + (A V) Wo
        gb.wo += &cache.c.t().dot(&dx1);
        let dc = dx1.dot(&b.wo.t());
        let da = dc.dot(&cache.v.t());
        let dv = cache.a.t().dot(&dc);
        let mut ds = Array2::zeros((n, n));
        for i in 0..n {
            let ai = cache.a.row(i);
            let dai = da.row(i);
            let dot: f64 = (0..=i).map(|j| ai[j] * dai[j]).sum();
            for j in 0..=i {
                ds[[i, j]] = ai[j] * (dai[j] - dot) * sc;
            }
        }
        let dq = ds.dot(&cache.k);
        let dk = ds.t().dot(&cache.q);
        gb.wq += &cache.x.t().dot(&dq);
        gb.wk += &cache.x.t().dot(&dk);
        gb.wv += &cache.x.t().dot(&dv);
        dx = dx1 + dq.dot(&b.wq.t()) + dk.dot(&b.wk.t()) + dv.dot(&b.wv.t());
    }

    for (t, &id) in ids.iter().enumerate() {
        let row = dx.row(t);
        let mut e = g.tok_emb.row_mut(id);
        e += &row;
        let mut pe = g.pos_emb.row_mut(t);
        pe += &row;
    }
    loss
}

/// One encoded training sequence and the index of its separator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub ids: Vec<usize>,
    pub sep_pos: usize,
}

impl EncodedPair {
    /// Number of predicted tokens (target plus EOS).
    pub fn target_len(&self) -> usize {
        self.ids.len() - 1 - self.sep_pos
    }
}

/// Mean per-target-token loss over `batch` and its gradient.
pub fn gradients(p: &GenParams, batch: &[&EncodedPair]) -> Result<(f64, GenParams)> {
    let tokens: usize = batch.iter().map(|e| e.target_len()).sum();
    if tokens == 0 {
        return Err(Error::Empty("generator batch".into()));
    }
    let scale = 1.0 / tokens as f64;
    let partials: Vec<(f64, GenParams)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = p.zeros_like();
            let loss = chunk
                .iter()
                .map(|e| sequence_loss_and_gradients(p, &e.ids, e.sep_pos, scale, &mut g))
                .sum::<f64>();
            (loss, g)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    total.check_finite()?;
    Ok((loss * scale, total))
}

/// Key/value cache for left-to-right decoding of one hypothesis.
#[derive(Clone, Debug)]
pub struct DecodeState {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl DecodeState {
    pub fn new(p: &GenParams) -> Self {
        DecodeState {
            keys: vec![Vec::new(); p.blocks.len()],
            values: vec![Vec::new(); p.blocks.len()],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds one token and returns the next-token logits.
    pub fn push(&mut self, p: &GenParams, id: usize) -> Array1<f64> {
        let d = p.tok_emb.ncols();
        let t = self.len;
        let sc = p.scale();
        let mut x = &p.tok_emb.row(id) + &p.pos_emb.row(t);
        for (l, b) in p.blocks.iter().enumerate() {
            let q = x.dot(&b.wq);
            self.keys[l].extend(x.dot(&b.wk));
            self.values[l].extend(x.dot(&b.wv));
            let keys = cache_rows(&self.keys[l], d);
            let values = cache_rows(&self.values[l], d);
            let mut a: Vec<f64> = (0..=t).map(|j| q.dot(&keys.row(j)) * sc).collect();
            nn::softmax_in_place(&mut a);
            let mut c = Array1::zeros(d);
            for (j, &aj) in a.iter().enumerate() {
                c.scaled_add(aj, &values.row(j));
            }
            let x1 = &x + &c.dot(&b.wo);
            let h = (x1.dot(&b.w1) + &b.b1).mapv(f64::tanh);
            x = &x1 + &h.dot(&b.w2) + &b.b2;
        }
        self.len += 1;
        x.dot(&p.wout) + &p.bout
    }
}

fn cache_rows(flat: &[f64], d: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((flat.len() / d, d), flat).expect("row-major cache")
}

/// A trained generator: vocabulary, parameters and the config that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub vocab: TokenVocab,
    pub params: GenParams,
    pub config: GenTrainConfig,
    pub epochs_trained: usize,
}

#[derive(Serialize, Deserialize)]
struct GeneratorMeta {
    shape: GenShape,
    vocab: TokenVocab,
    config: GenTrainConfig,
    epochs_trained: usize,
}

impl GeneratorModel {
    pub fn bos(&self) -> usize {
        self.vocab.id(BOS)
    }

    pub fn eos(&self) -> usize {
        self.vocab.id(EOS)
    }

    pub fn sep(&self) -> usize {
        self.vocab.id(SEP)
    }

    pub fn unk(&self) -> usize {
        self.vocab.id(UNK)
    }

    pub fn max_positions(&self) -> usize {
        self.params.pos_emb.nrows()
    }

    /// Longest source prefix kept: half the positions, minus the specials.
    pub fn max_source_len(&self) -> usize {
        (self.max_positions().saturating_sub(3)) / 2
    }

    /// `[BOS] source [SEP]`, truncating the source to fit.
    pub fn prefix_ids(&self, source: &[String]) -> Vec<usize> {
        let keep = source.len().min(self.max_source_len());
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(self.bos());
        ids.extend(source[..keep].iter().map(|t| self.vocab.id(t)));
        ids.push(self.sep());
        ids
    }

    /// Full teacher-forcing sequence for a pair; the target is truncated so
    /// the sequence fits the positional table.
    pub fn encode_pair(&self, source: &[String], target: &[String]) -> EncodedPair {
        let mut ids = self.prefix_ids(source);
        let sep_pos = ids.len() - 1;
        let room = self.max_positions() - ids.len() - 1;
        ids.extend(target.iter().take(room).map(|t| self.vocab.id(t)));
        ids.push(self.eos());
        EncodedPair { ids, sep_pos }
    }

    pub fn is_special(&self, id: usize) -> bool {
        SPECIALS.iter().any(|s| self.vocab.get(s) == Some(id))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = GeneratorMeta {
            shape: self.params.shape(),
            vocab: self.vocab.clone(),
            config: self.config.clone(),
            epochs_trained: self.epochs_trained,
        };
        Ok(Checkpoint::from_parameters(CHECKPOINT_KIND, serde_json::to_value(meta)?, &self.params))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a generator, found `{}`", ck.kind)));
        }
        let meta: GeneratorMeta = serde_json::from_value(ck.meta.clone())?;
        if meta.shape.vocab != meta.vocab.len() {
            return Err(Error::Checkpoint("vocabulary size disagrees with tensor shapes".into()));
        }
        for s in SPECIALS {
            if meta.vocab.get(s).is_none() {
                return Err(Error::Checkpoint(format!("vocabulary lacks `{s}`")));
            }
        }
        let mut params = GenParams::zeros(meta.shape);
        ck.restore_into(&mut params)?;
        Ok(GeneratorModel {
            vocab: meta.vocab,
            params,
            config: meta.config,
            epochs_trained: meta.epochs_trained,
        })
    }
}

/// Log-probabilities of the next token after `prefix`, via a full forward pass.
pub fn next_token_log_probs(p: &GenParams, prefix: &[usize]) -> Array1<f64> {
    let logits = forward_logits(p, prefix);
    nn::log_softmax(logits.row(prefix.len() - 1))
}
