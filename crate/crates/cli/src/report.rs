//! Result tables: one row per (augmentation method, training fraction).

use anyhow::{bail, Result};

use crate::manifest::EvalSummary;

pub const COLUMNS: [&str; 14] = [
    "DA", "%Train", "N_train", "weight", "P@1", "P@3", "P@5", "nDCG@3", "nDCG@5", "PSP@1", "PSP@3", "PSP@5",
    "PSnDCG@3", "PSnDCG@5",
];

/// Metric columns as (family, k) in table order.
const METRIC_COLUMNS: [(&str, usize); 10] = [
    ("precision", 1),
    ("precision", 3),
    ("precision", 5),
    ("ndcg", 3),
    ("ndcg", 5),
    ("psp", 1),
    ("psp", 3),
    ("psp", 5),
    ("psndcg", 3),
    ("psndcg", 5),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<EvalSummary>,
}

fn family<'a>(s: &'a EvalSummary, name: &str) -> &'a [f64] {
    match name {
        "precision" => &s.precision,
        "ndcg" => &s.ndcg,
        "psp" => &s.psp,
        _ => &s.psndcg,
    }
}

/// Metric values of a row in column order, as percentages.
fn metric_values(s: &EvalSummary) -> Vec<f64> {
    METRIC_COLUMNS
        .iter()
        .map(|&(fam, k)| {
            let i = s.ks.iter().position(|&x| x == k).expect("checked cut-offs");
            100.0 * family(s, fam)[i]
        })
        .collect()
}

pub fn format_fraction(fraction: f64) -> String {
    let p = fraction * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{:.0}%", p)
    } else {
        let s = format!("{p:.4}");
        format!("{}%", s.trim_end_matches('0').trim_end_matches('.'))
    }
}

fn format_weight(w: Option<f64>) -> String {
    w.map_or_else(|| "-".to_string(), |w| format!("{w}"))
}

impl Report {
    /// Sorts rows by training fraction (largest first), then method with the
    /// baseline first. Every row must carry the same cut-offs, including
    /// 1, 3 and 5.
    pub fn new(mut rows: Vec<EvalSummary>) -> Result<Self> {
        let Some(first) = rows.first() else {
            bail!("no evaluation manifests to report");
        };
        let ks = first.ks.clone();
        for k in [1, 3, 5] {
            if !ks.contains(&k) {
                bail!("metric set lacks k = {k}");
            }
        }
        if let Some(bad) = rows.iter().find(|r| r.ks != ks) {
            bail!(
                "inconsistent metric sets: {:?} vs {:?} ({} at {})",
                ks,
                bad.ks,
                bad.method.display(),
                format_fraction(bad.fraction)
            );
        }
        rows.sort_by(|a, b| {
            b.fraction
                .total_cmp(&a.fraction)
                .then(a.method.cmp(&b.method))
                .then(a.weight.unwrap_or(0.0).total_cmp(&b.weight.unwrap_or(0.0)))
        });
        Ok(Report { rows })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            let mut rec = vec![
                r.method.display().to_string(),
                format_fraction(r.fraction),
                r.n_train.to_string(),
                format_weight(r.weight),
            ];
            rec.extend(metric_values(r).iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    /// Aligned table; within each training fraction the best value of every
    /// metric column carries a trailing `*`.
    pub fn to_text(&self) -> String {
        let values: Vec<Vec<f64>> = self.rows.iter().map(metric_values).collect();
        let mut cells: Vec<Vec<String>> = vec![COLUMNS.iter().map(|c| c.to_string()).collect()];
        for (i, r) in self.rows.iter().enumerate() {
            let block: Vec<usize> = (0..self.rows.len())
                .filter(|&j| self.rows[j].fraction == r.fraction)
                .collect();
            let mut row = vec![
                r.method.display().to_string(),
                format_fraction(r.fraction),
                r.n_train.to_string(),
                format_weight(r.weight),
            ];
            for (c, &v) in values[i].iter().enumerate() {
                let best = block.iter().map(|&j| values[j][c]).fold(f64::NEG_INFINITY, f64::max);
                let mark = if block.len() > 1 && format!("{v:.2}") == format!("{best:.2}") { "*" } else { "" };
                row.push(format!("{v:.2}{mark}"));
            }
            cells.push(row);
        }
        let widths: Vec<usize> = (0..COLUMNS.len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AugMethod;

    fn row(method: AugMethod, fraction: f64, score: f64) -> EvalSummary {
        EvalSummary {
            method,
            fraction,
            n_train: 10,
            weight: method.is_synthetic().then_some(0.5),
            ks: vec![1, 3, 5],
            precision: vec![score; 3],
            ndcg: vec![score; 3],
            psp: vec![score; 3],
            psndcg: vec![score; 3],
            evaluated: 4,
            skipped_empty_gold: 0,
        }
    }

    #[test]
    fn single_manifest_gives_header_and_one_row() {
        let r = Report::new(vec![row(AugMethod::None, 1.0, 0.5)]).unwrap();
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], COLUMNS.join(","));
        assert_eq!(lines[1], "-,100%,10,-,50.0000,50.0000,50.0000,50.0000,50.0000,50.0000,50.0000,50.0000,50.0000,50.0000");
        assert!(!r.to_text().contains('*'));
    }

    #[test]
    fn rows_sorted_by_fraction_then_method() {
        let r = Report::new(vec![
            row(AugMethod::Eda, 0.05, 0.1),
            row(AugMethod::Gda, 1.0, 0.3),
            row(AugMethod::None, 0.05, 0.2),
            row(AugMethod::None, 1.0, 0.4),
            row(AugMethod::Wordnet, 0.05, 0.1),
        ])
        .unwrap();
        let order: Vec<(String, &str)> = r.rows.iter().map(|s| (format_fraction(s.fraction), s.method.display())).collect();
        assert_eq!(
            order,
            vec![
                ("100%".into(), "-"),
                ("100%".into(), "GDA"),
                ("5%".into(), "-"),
                ("5%".into(), "EDA"),
                ("5%".into(), "WordNet"),
            ]
        );
        let text = r.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[2].contains("40.00*"));
        assert!(!lines[3].contains('*'));
        assert!(lines[4].contains("20.00*"));
    }

    #[test]
    fn inconsistent_cutoffs_rejected() {
        let mut bad = row(AugMethod::Eda, 1.0, 0.1);
        bad.ks = vec![1, 3, 5, 10];
        for v in [&mut bad.precision, &mut bad.ndcg, &mut bad.psp, &mut bad.psndcg] {
            v.push(0.0);
        }
        assert!(Report::new(vec![row(AugMethod::None, 1.0, 0.2), bad]).is_err());
        assert!(Report::new(vec![]).is_err());
        let mut short = row(AugMethod::None, 1.0, 0.2);
        short.ks = vec![1, 3];
        assert!(Report::new(vec![short]).is_err());
    }

    #[test]
    fn fraction_labels() {
        assert_eq!(format_fraction(1.0), "100%");
        assert_eq!(format_fraction(0.05), "5%");
        assert_eq!(format_fraction(0.01), "1%");
        assert_eq!(format_fraction(0.005), "0.5%");
    }
}
