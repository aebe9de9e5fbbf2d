//! Parameter plumbing shared by the classifier and the generator:
//! named tensors, optimizers, initialisation and numeric helpers.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, shaped, row-major view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A model (or a gradient of one) as an ordered list of named tensors.
pub trait Parameters {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// `self += scale * other`; both sides must share the tensor layout.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.tensors();
        for ((_, dst), s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.data) {
                *d += scale * v;
            }
        }
    }

    /// Errors with the tensor name if any entry is NaN or infinite.
    fn check_finite(&self) -> Result<()> {
        for t in self.tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(t.name));
            }
        }
        Ok(())
    }
}

pub(crate) fn view2<'a>(name: &str, a: &'a Array2<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.to_string(),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn view1<'a>(name: &str, a: &'a Array1<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.to_string(),
        shape: vec![a.len()],
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn mut2<'a>(name: &str, a: &'a mut Array2<f64>) -> (String, &'a mut [f64]) {
    (name.to_string(), a.as_slice_mut().expect("standard layout"))
}

pub(crate) fn mut1<'a>(name: &str, a: &'a mut Array1<f64>) -> (String, &'a mut [f64]) {
    (name.to_string(), a.as_slice_mut().expect("standard layout"))
}

pub(crate) fn normal2<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn log_softmax(xs: ArrayView1<f64>) -> Array1<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    xs.mapv(|x| x - lse)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain SGD or Adam with optional L2 weight decay. State is laid out in the
/// same tensor order as the parameters it updates.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if self.m.is_empty() && self.kind == OptimizerKind::Adam {
            self.m = grads.iter().map(|g| vec![0.0; g.data.len()]).collect();
            self.v = self.m.clone();
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (ti, ((_, p), g)) in params.iter_mut().zip(&grads).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.iter_mut().zip(g.data) {
                        *w -= self.lr * (gi + self.weight_decay * *w);
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[ti], &mut self.v[ti]);
                    for i in 0..p.len() {
                        let gi = g.data[i] + self.weight_decay * p[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Central finite-difference gradient of `loss` over every parameter entry.
/// Returns one vector per tensor, in `tensors()` order.
pub fn finite_difference<P, F>(params: &P, h: f64, loss: F) -> Vec<Vec<f64>>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let mut work = params.clone();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (ti, &n) in sizes.iter().enumerate() {
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.tensors_mut()[ti].1[i];
            work.tensors_mut()[ti].1[i] = orig + h;
            let plus = loss(&work);
            work.tensors_mut()[ti].1[i] = orig - h;
            let minus = loss(&work);
            work.tensors_mut()[ti].1[i] = orig;
            *gi = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        return norm(&diff);
    }
    norm(&diff) / scale
}
