//! Ranked-retrieval metrics for multi-label prediction: P@k, nDCG@k and their
//! propensity-scored counterparts PSP@k and PSnDCG@k.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, PropensityModel};
use crate::error::{Error, Result};

/// Cut-offs reported by default.
pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

/// Labels in predicted order together with the gold label set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPrediction {
    ranked: Vec<usize>,
    gold: LabelSet,
}

impl RankedPrediction {
    pub fn new(ranked: Vec<usize>, gold: LabelSet) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ranked.len());
        if let Some(dup) = ranked.iter().find(|&&l| !seen.insert(l)) {
            return Err(Error::invalid(format!("label {dup} ranked twice")));
        }
        Ok(RankedPrediction { ranked, gold })
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn gold(&self) -> &LabelSet {
        &self.gold
    }

    fn top(&self, k: usize) -> Result<&[usize]> {
        if k == 0 || self.ranked.len() < k {
            return Err(Error::invalid(format!(
                "need at least k = {k} ranked labels, have {}",
                self.ranked.len()
            )));
        }
        Ok(&self.ranked[..k])
    }

    fn hit(&self, label: usize) -> bool {
        self.gold.contains(&label)
    }
}

fn discount(rank: usize, log_base: f64) -> f64 {
    // rank is 1-based
    ((rank + 1) as f64).ln() / log_base.ln()
}

fn ideal_dcg(rp: &RankedPrediction, k: usize, log_base: f64) -> Result<f64> {
    if rp.gold.is_empty() {
        return Err(Error::Empty("gold label set".into()));
    }
    Ok((1..=k.min(rp.gold.len())).map(|i| 1.0 / discount(i, log_base)).sum())
}

fn propensity_of(pm: &PropensityModel, label: usize) -> Result<f64> {
    pm.get(label)
        .ok_or_else(|| Error::invalid(format!("no propensity for label {label}")))
}

pub fn precision_at_k(rp: &RankedPrediction, k: usize) -> Result<f64> {
    let hits = rp.top(k)?.iter().filter(|&&l| rp.hit(l)).count();
    Ok(hits as f64 / k as f64)
}

pub fn dcg_at_k(rp: &RankedPrediction, k: usize, log_base: f64) -> Result<f64> {
    Ok(rp
        .top(k)?
        .iter()
        .enumerate()
        .filter(|(_, &l)| rp.hit(l))
        .map(|(i, _)| 1.0 / discount(i + 1, log_base))
        .sum())
}

pub fn ndcg_at_k(rp: &RankedPrediction, k: usize, log_base: f64) -> Result<f64> {
    let dcg = dcg_at_k(rp, k, log_base)?;
    Ok(dcg / ideal_dcg(rp, k, log_base)?)
}

pub fn psp_at_k(rp: &RankedPrediction, k: usize, pm: &PropensityModel) -> Result<f64> {
    let mut total = 0.0;
    for &l in rp.top(k)? {
        if rp.hit(l) {
            total += 1.0 / propensity_of(pm, l)?;
        }
    }
    Ok(total / k as f64)
}

pub fn psdcg_at_k(rp: &RankedPrediction, k: usize, pm: &PropensityModel, log_base: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, &l) in rp.top(k)?.iter().enumerate() {
        if rp.hit(l) {
            total += 1.0 / (propensity_of(pm, l)? * discount(i + 1, log_base));
        }
    }
    Ok(total)
}

pub fn psndcg_at_k(rp: &RankedPrediction, k: usize, pm: &PropensityModel, log_base: f64) -> Result<f64> {
    let pdcg = psdcg_at_k(rp, k, pm, log_base)?;
    Ok(pdcg / ideal_dcg(rp, k, log_base)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Precision,
    Ndcg,
    Psp,
    Psndcg,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Precision, Metric::Ndcg, Metric::Psp, Metric::Psndcg];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "P",
            Metric::Ndcg => "nDCG",
            Metric::Psp => "PSP",
            Metric::Psndcg => "PSnDCG",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per cut-off for each metric family, aligned with `MetricReport::ks`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub precision: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub psp: Vec<f64>,
    pub psndcg: Vec<f64>,
}

impl MetricValues {
    pub fn family(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Precision => &self.precision,
            Metric::Ndcg => &self.ndcg,
            Metric::Psp => &self.psp,
            Metric::Psndcg => &self.psndcg,
        }
    }

    fn family_mut(&mut self, metric: Metric) -> &mut Vec<f64> {
        match metric {
            Metric::Precision => &mut self.precision,
            Metric::Ndcg => &mut self.ndcg,
            Metric::Psp => &mut self.psp,
            Metric::Psndcg => &mut self.psndcg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub mean: MetricValues,
    /// Values for every evaluated example, in input order.
    pub per_example: Vec<MetricValues>,
    pub evaluated: usize,
    /// Examples left out because their gold label set is empty.
    pub skipped_empty_gold: usize,
}

impl MetricReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        self.mean.family(metric).get(i).copied()
    }
}

/// Corpus means of all four families at every `k`, with log base 2.
pub fn evaluate(predictions: &[RankedPrediction], pm: &PropensityModel, ks: &[usize]) -> Result<MetricReport> {
    if predictions.is_empty() {
        return Err(Error::Empty("prediction list".into()));
    }
    if ks.is_empty() {
        return Err(Error::invalid("no cut-offs requested"));
    }
    let num_labels = pm.len();
    for rp in predictions {
        if let Some(&bad) = rp.ranked.iter().chain(rp.gold.iter()).find(|&&l| l >= num_labels) {
            return Err(Error::DimensionMismatch(format!(
                "label {bad} outside the {num_labels} labels covered by the propensity model"
            )));
        }
    }
    let per_example: Vec<Option<MetricValues>> = predictions
        .par_iter()
        .map(|rp| {
            if rp.gold.is_empty() {
                return Ok(None);
            }
            let mut v = MetricValues::default();
            for &k in ks {
                v.precision.push(precision_at_k(rp, k)?);
                v.ndcg.push(ndcg_at_k(rp, k, 2.0)?);
                v.psp.push(psp_at_k(rp, k, pm)?);
                v.psndcg.push(psndcg_at_k(rp, k, pm, 2.0)?);
            }
            Ok(Some(v))
        })
        .collect::<Result<_>>()?;
    let skipped = per_example.iter().filter(|v| v.is_none()).count();
    let evaluated: Vec<MetricValues> = per_example.into_iter().flatten().collect();
    if evaluated.is_empty() {
        return Err(Error::Empty("every example has an empty gold label set".into()));
    }
    let mut mean = MetricValues::default();
    for metric in Metric::ALL {
        let sums = mean.family_mut(metric);
        *sums = vec![0.0; ks.len()];
        for v in &evaluated {
            for (s, x) in sums.iter_mut().zip(v.family(metric)) {
                *s += x;
            }
        }
        for s in sums.iter_mut() {
            *s /= evaluated.len() as f64;
        }
    }
    Ok(MetricReport {
        ks: ks.to_vec(),
        mean,
        evaluated: evaluated.len(),
        per_example: evaluated,
        skipped_empty_gold: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rp(ranked: &[usize], gold: &[usize]) -> RankedPrediction {
        RankedPrediction::new(ranked.to_vec(), gold.iter().copied().collect()).unwrap()
    }

    fn props(p: &[f64]) -> PropensityModel {
        PropensityModel {
            p: p.to_vec(),
            ..PropensityModel::unit(p.len())
        }
    }

    #[test]
    fn precision_cases() {
        let r = rp(&[0, 1, 2], &[0, 2]);
        assert_abs_diff_eq!(precision_at_k(&r, 3).unwrap(), 2.0 / 3.0);
        assert_eq!(precision_at_k(&rp(&[0, 1], &[0, 1, 2]), 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&rp(&[3, 4], &[0]), 2).unwrap(), 0.0);
        assert!(precision_at_k(&r, 4).is_err());
    }

    #[test]
    fn ndcg_cases() {
        let r = rp(&[0, 1, 2], &[0, 2]);
        assert_abs_diff_eq!(ndcg_at_k(&r, 3, 2.0).unwrap(), 0.919_720_789_148_187_6, epsilon = 1e-12);
        assert_eq!(ndcg_at_k(&r, 1, 2.0).unwrap(), precision_at_k(&r, 1).unwrap());
        assert_eq!(ndcg_at_k(&rp(&[0, 1, 2], &[0, 1, 2, 3]), 3, 2.0).unwrap(), 1.0);
        assert!(matches!(ndcg_at_k(&rp(&[0], &[]), 1, 2.0), Err(Error::Empty(_))));
    }

    #[test]
    fn propensity_scored_cases() {
        let r = rp(&[1, 0], &[1]);
        let pm = props(&[1.0, 0.5]);
        assert_eq!(psp_at_k(&r, 1, &pm).unwrap(), 2.0);
        assert_eq!(psndcg_at_k(&r, 1, &pm, 2.0).unwrap(), 2.0);
        let miss = rp(&[0], &[1]);
        assert_eq!(psp_at_k(&miss, 1, &pm).unwrap(), 0.0);
        assert_eq!(psndcg_at_k(&miss, 1, &pm, 2.0).unwrap(), 0.0);
        let unit = PropensityModel::unit(3);
        let r = rp(&[2, 0, 1], &[0, 1]);
        assert_eq!(psp_at_k(&r, 3, &unit).unwrap(), precision_at_k(&r, 3).unwrap());
        assert_eq!(psndcg_at_k(&r, 3, &unit, 2.0).unwrap(), ndcg_at_k(&r, 3, 2.0).unwrap());
        assert!(psp_at_k(&rp(&[5], &[5]), 1, &pm).is_err());
    }

    #[test]
    fn evaluate_means_and_skips() {
        let preds = vec![
            rp(&[0, 1, 2, 3, 4], &[0]),
            rp(&[1, 0, 2, 3, 4], &[0]),
            rp(&[1, 0, 2, 3, 4], &[]),
        ];
        let report = evaluate(&preds, &PropensityModel::unit(5), &DEFAULT_KS).unwrap();
        assert_eq!(report.get(Metric::Precision, 1), Some(0.5));
        assert_eq!(report.evaluated, 2);
        assert_eq!(report.skipped_empty_gold, 1);
        assert_eq!(report.ks, vec![1, 3, 5]);
        assert_eq!(report.mean.psp, report.mean.precision);
        assert_eq!(report.mean.psndcg, report.mean.ndcg);
        assert!(evaluate(&[], &PropensityModel::unit(5), &DEFAULT_KS).is_err());
        assert!(evaluate(&preds, &PropensityModel::unit(3), &DEFAULT_KS).is_err());
    }

    #[test]
    fn duplicate_ranks_rejected() {
        assert!(RankedPrediction::new(vec![1, 1], LabelSet::new()).is_err());
    }
}
