//! Analytic gradients of the weighted binary cross-entropy.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use super::{encode_ids, label_attention_parts, ClassifierParams, Head, PROB_EPS};
use crate::corpus::LabelSet;
use crate::error::Result;
use crate::nn::{sigmoid, Parameters};

/// Gradients share the parameter layout.
pub type Gradients = ClassifierParams;

/// Examples per accumulation chunk; fixed so the summation order (and hence
/// every bit of the result) does not depend on the thread pool.
const CHUNK: usize = 8;

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    &col * &row
}

/// Adds `scale * d(loss)/d(params)` for one example into `grads` and returns
/// the example's weighted loss.
pub fn example_loss_and_gradients(
    params: &ClassifierParams,
    ids: &[usize],
    labels: &LabelSet,
    lambda: f64,
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    let (h, e) = encode_ids(ids, &params.encoder);
    let t_len = ids.len() as f64;

    let scores = match &params.head {
        Head::Vanilla(head) => head.weight.dot(&e) + &head.bias,
        Head::LabelAttention(head) => label_attention_parts(&h, head)?.2,
    };
    let k = scores.len();
    let mut y = vec![0.0; k];
    for &l in labels {
        y[l] = 1.0;
    }
    let probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
    let loss = super::weighted_bce_loss(&probs, &y, lambda);

    // d loss / d score, zero where the clamp is active.
    let ds = Array1::from_shape_fn(k, |i| {
        let p = probs[i];
        if p > PROB_EPS && p < 1.0 - PROB_EPS {
            scale * lambda * (p - y[i]) / k as f64
        } else {
            0.0
        }
    });

    match (&params.head, &mut grads.head) {
        (Head::Vanilla(head), Head::Vanilla(g)) => {
            g.weight += &outer(&ds, &e);
            g.bias += &ds;
            let de = head.weight.t().dot(&ds);
            let du = &de * &e.mapv(|v| 1.0 - v * v);
            let mean = h.mean_axis(Axis(0)).expect("non-empty");
            grads.encoder.pool_weight += &outer(&du, &mean);
            grads.encoder.pool_bias += &du;
            let dmean = params.encoder.pool_weight.t().dot(&du) / t_len;
            for &id in ids {
                let mut row = grads.encoder.embedding.row_mut(id);
                row += &dmean;
            }
        }
        (Head::LabelAttention(head), Head::LabelAttention(g)) => {
            let (alpha, m, _) = label_attention_parts(&h, head)?;
            let ds_col = ds.view().insert_axis(Axis(1));
            g.weight += &(&m * &ds_col);
            g.bias += &ds;
            let dm = &head.weight * &ds_col; // K x d
            let dalpha = h.dot(&dm.t()); // T x K
            let weighted = (&alpha * &dalpha).sum_axis(Axis(0)); // K
            let dz = &alpha * &(&dalpha - &weighted.insert_axis(Axis(0)));
            g.attention += &dz.t().dot(&h);
            let dh = alpha.dot(&dm) + dz.dot(&head.attention);
            for (t, &id) in ids.iter().enumerate() {
                let mut row = grads.encoder.embedding.row_mut(id);
                row += &dh.row(t);
            }
        }
        _ => unreachable!("gradient buffer built for a different head"),
    }
    Ok(loss)
}

/// One training instance: token ids, gold labels and loss weight.
#[derive(Clone, Copy, Debug)]
pub struct Instance<'a> {
    pub ids: &'a [usize],
    pub labels: &'a LabelSet,
    pub weight: f64,
}

/// Mean weighted loss over `batch` and its exact gradient.
pub fn gradients(params: &ClassifierParams, batch: &[Instance<'_>]) -> Result<(f64, Gradients)> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let mut loss = 0.0;
            for inst in chunk {
                loss += example_loss_and_gradients(params, inst.ids, inst.labels, inst.weight, scale, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut total) = iter.next().unwrap_or_else(|| (0.0, params.zeros_like()));
    for (l, g) in iter {
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    total.check_finite()?;
    Ok((loss * scale, total))
}

