use std::cmp::Ordering;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{DecodeState, GeneratorModel};
use crate::error::{Error, Result};
use crate::nn;
use crate::textsim::{tokenize, TokenSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Logits are divided by this before the softmax; values near zero
    /// approach argmax scoring.
    pub temperature: f64,
    pub repetition_penalty: f64,
    /// Maximum number of generated words.
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 10,
            temperature: 1.0,
            repetition_penalty: 1.0,
            max_len: 200,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::invalid("beam width must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(Error::invalid("repetition penalty must be at least 1"));
        }
        Ok(())
    }
}

/// Temperature scaling then CTRL-style penalty on tokens already emitted:
/// positive logits are divided by the penalty, negative ones multiplied.
pub fn adjust_logits(logits: &Array1<f64>, emitted: &[usize], cfg: &DecodeConfig) -> Array1<f64> {
    let mut out = logits.mapv(|l| l / cfg.temperature);
    let mut seen = vec![false; out.len()];
    for &t in emitted {
        if !std::mem::replace(&mut seen[t], true) {
            let l = out[t];
            out[t] = if l > 0.0 { l / cfg.repetition_penalty } else { l * cfg.repetition_penalty };
        }
    }
    out
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    score: f64,
    state: DecodeState,
    logits: Array1<f64>,
}

/// A finished hypothesis: generated ids (without EOS) and its
/// length-normalised log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Finished {
    pub tokens: Vec<usize>,
    pub total: f64,
    pub normalized: f64,
}

fn prime(model: &GeneratorModel, source: &[String]) -> (DecodeState, Array1<f64>) {
    let mut state = DecodeState::new(&model.params);
    let mut logits = Array1::zeros(0);
    for id in model.prefix_ids(source) {
        logits = state.push(&model.params, id);
    }
    (state, logits)
}

/// Step budget: `max_len` words, also bounded by the positional table.
fn step_limit(model: &GeneratorModel, prefix_len: usize, cfg: &DecodeConfig) -> usize {
    cfg.max_len.min(model.max_positions().saturating_sub(prefix_len))
}

/// Beam search over target continuations. Live beams are ranked by summed
/// log-probability (they share a length); finished ones by the sum divided
/// by their token count including EOS. Ties go to the earlier beam, then
/// the lower token id. The unknown, BOS and separator tokens are never
/// proposed.
pub fn beam_search(model: &GeneratorModel, source: &[String], cfg: &DecodeConfig) -> Result<Vec<Finished>> {
    cfg.validate()?;
    let eos = model.eos();
    let (state, logits) = prime(model, source);
    let limit = step_limit(model, state.len(), cfg);
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        state,
        logits,
    }];
    let mut finished: Vec<Finished> = Vec::new();
    let allowed: Vec<usize> = (0..model.vocab.len())
        .filter(|&t| t == eos || !model.is_special(t))
        .collect();

    for step in 0..=limit {
        let slots = cfg.beam_width.saturating_sub(finished.len());
        if live.is_empty() || slots == 0 {
            break;
        }
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * allowed.len());
        for (b, h) in live.iter().enumerate() {
            let lp = nn::log_softmax(adjust_logits(&h.logits, &h.tokens, cfg).view());
            if step == limit {
                // Out of budget: only closing the hypothesis is possible.
                cands.push((h.score, b, eos));
                continue;
            }
            for &t in &allowed {
                cands.push((h.score + lp[t], b, t));
            }
        }
        cands.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        let mut next = Vec::new();
        for &(score, b, t) in cands.iter().take(slots) {
            let h = &live[b];
            if t == eos {
                let count = h.tokens.len() + usize::from(step < limit);
                finished.push(Finished {
                    tokens: h.tokens.clone(),
                    total: score,
                    normalized: score / count.max(1) as f64,
                });
            } else {
                let mut state = h.state.clone();
                let logits = state.push(&model.params, t);
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                next.push(Hypothesis { tokens, score, state, logits });
            }
        }
        live = next;
    }
    finished.sort_by(|x, y| y.normalized.partial_cmp(&x.normalized).unwrap_or(Ordering::Equal));
    Ok(finished)
}

/// Best completed hypothesis as token ids.
pub fn generate_ids(model: &GeneratorModel, source: &[String], cfg: &DecodeConfig) -> Result<Vec<usize>> {
    Ok(beam_search(model, source, cfg)?
        .into_iter()
        .next()
        .map(|f| f.tokens)
        .unwrap_or_default())
}

/// Tokenizes `source`, decodes, and joins the words with single spaces.
pub fn generate(model: &GeneratorModel, source: &str, cfg: &DecodeConfig) -> Result<String> {
    let src = tokenize(source);
    generate_from_tokens(model, &src, cfg)
}

pub fn generate_from_tokens(model: &GeneratorModel, source: &TokenSequence, cfg: &DecodeConfig) -> Result<String> {
    let ids = generate_ids(model, source.as_slice(), cfg)?;
    Ok(ids
        .iter()
        .map(|&i| model.vocab.token(i))
        .collect::<Vec<_>>()
        .join(" "))
}

/// Greedy decoding: at each step take the highest-probability allowed
/// token (lowest id on ties) until EOS or the length budget.
pub fn greedy_ids(model: &GeneratorModel, source: &[String], cfg: &DecodeConfig) -> Vec<usize> {
    let eos = model.eos();
    let (mut state, mut logits) = prime(model, source);
    let limit = step_limit(model, state.len(), cfg);
    let mut out = Vec::new();
    let mut score = 0.0;
    while out.len() < limit {
        let lp = nn::log_softmax(adjust_logits(&logits, &out, cfg).view());
        // Compare running sums so rounding ties resolve as in beam search.
        let mut best = eos;
        for t in 0..lp.len() {
            let (a, b) = (score + lp[t], score + lp[best]);
            if (t == eos || !model.is_special(t)) && (a > b || (a == b && t < best)) {
                best = t;
            }
        }
        if best == eos {
            break;
        }
        score += lp[best];
        out.push(best);
        logits = state.push(&model.params, best);
    }
    out
}

/// Decodes every source in parallel; output order follows the input.
pub fn generate_batch(
    model: &GeneratorModel,
    sources: &[(String, TokenSequence)],
    cfg: &DecodeConfig,
) -> Result<Vec<(String, String)>> {
    sources
        .par_iter()
        .map(|(id, src)| Ok((id.clone(), generate_from_tokens(model, src, cfg)?)))
        .collect()
}
