use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest propensity handed out, keeping inverse propensities finite.
pub const PROPENSITY_FLOOR: f64 = 1e-12;

/// Per-label propensities `p_l = 1 / (1 + C (N_l + B)^-A)` with
/// `C = (ln N - 1) (B + 1)^A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: Vec<f64>,
}

impl PropensityModel {
    /// Every label observed with certainty.
    pub fn unit(num_labels: usize) -> Self {
        PropensityModel {
            a: 0.55,
            b: 1.5,
            c: 0.0,
            p: vec![1.0; num_labels],
        }
    }

    pub fn get(&self, label: usize) -> Option<f64> {
        self.p.get(label).copied()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Fits propensities from per-label training counts over `n` examples.
/// `C` is clamped at zero for tiny corpora, which makes every `p_l` one.
pub fn compute_propensities(counts: &[usize], n: usize, a: f64, b: f64) -> Result<PropensityModel> {
    if n == 0 {
        return Err(Error::invalid("propensities need at least one example"));
    }
    if !(a > 0.0) || !(b >= 0.0) {
        return Err(Error::invalid(format!(
            "propensity parameters must satisfy A > 0 and B >= 0 (A={a}, B={b})"
        )));
    }
    let c = (((n as f64).ln() - 1.0) * (b + 1.0).powf(a)).max(0.0);
    let p = counts
        .iter()
        .map(|&count| {
            if c == 0.0 {
                return 1.0;
            }
            let p = 1.0 / (1.0 + c * (count as f64 + b).powf(-a));
            p.clamp(PROPENSITY_FLOOR, 1.0)
        })
        .collect();
    Ok(PropensityModel { a, b, c, p })
}
