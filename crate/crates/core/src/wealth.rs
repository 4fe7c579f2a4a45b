//! Wealth estimate objective and the Pearson correlation screen used to pick
//! global model features.

use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizedTable, MEDIAN_HOUSEHOLD_INCOME, PCT_NOT_EARNING, POPULATION_DENSITY};
use crate::error::{Error, Result};

/// Features that define the wealth estimate and are excluded from the screen.
pub const WEALTH_INPUTS: [&str; 3] = [POPULATION_DENSITY, MEDIAN_HOUSEHOLD_INCOME, PCT_NOT_EARNING];

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.3;

/// Normalized density, normalized income and not-earning fraction, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthInputs {
    pd: f64,
    mhi: f64,
    pne: f64,
}

impl WealthInputs {
    pub fn new(pd: f64, mhi: f64, pne: f64) -> Result<Self> {
        for (name, v) in [("pd", pd), ("mhi", mhi), ("pne", pne)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(WealthInputs { pd, mhi, pne })
    }
}

/// `pd * mhi * (1 - pne)`.
pub fn wealth_estimate(w: &WealthInputs) -> f64 {
    w.pd * w.mhi * (1.0 - w.pne)
}

/// Wealth estimate of every row of a normalized table. The not-earning
/// column is stored as a percentage, so its raw value is divided by 100.
pub fn table_wealth(table: &NormalizedTable) -> Result<Vec<f64>> {
    let col = |name: &str| {
        table
            .feature_index(name)
            .ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))
    };
    let (pd, mhi, pne) = (col(POPULATION_DENSITY)?, col(MEDIAN_HOUSEHOLD_INCOME)?, col(PCT_NOT_EARNING)?);
    (0..table.len())
        .map(|i| {
            let row = &table.rows[i];
            let not_earning = (table.raw_value(i, pne) / 100.0).clamp(0.0, 1.0);
            Ok(wealth_estimate(&WealthInputs::new(row[pd], row[mhi], not_earning)?))
        })
        .collect()
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Domain("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("pearson undefined for a constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    pub pearson_r: f64,
    /// Column was constant, so `pearson_r` is reported as 0.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<FeatureCorrelation>,
    pub threshold: f64,
    pub selected: Vec<String>,
}

impl CorrelationReport {
    pub fn r(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.pearson_r)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.selected = select_features(&self, threshold);
        self.threshold = threshold;
        self
    }
}

/// Correlates every feature except the wealth inputs against the per-row
/// wealth estimate. Entries are in table column order.
pub fn correlate_features(table: &NormalizedTable) -> Result<CorrelationReport> {
    if table.len() < 2 {
        return Err(Error::Validation("correlation needs at least two zipcodes".into()));
    }
    let we = table_wealth(table)?;
    let mut entries = Vec::new();
    for (j, name) in table.feature_names.iter().enumerate() {
        if WEALTH_INPUTS.contains(&name.as_str()) {
            continue;
        }
        let column = table.column(j);
        let constant = column.iter().all(|&v| v == column[0]);
        let pearson_r = if constant { 0.0 } else { pearson(&column, &we)? };
        entries.push(FeatureCorrelation {
            feature: name.clone(),
            pearson_r,
            constant,
        });
    }
    let report = CorrelationReport {
        entries,
        threshold: DEFAULT_CORRELATION_THRESHOLD,
        selected: Vec::new(),
    };
    Ok(report.with_threshold(DEFAULT_CORRELATION_THRESHOLD))
}

/// Non-constant features with `|r| >= threshold`, by descending `|r|` then name.
pub fn select_features(report: &CorrelationReport, threshold: f64) -> Vec<String> {
    let mut picked: Vec<&FeatureCorrelation> = report
        .entries
        .iter()
        .filter(|e| !e.constant && e.pearson_r.abs() >= threshold)
        .collect();
    picked.sort_by(|a, b| {
        b.pearson_r
            .abs()
            .total_cmp(&a.pearson_r.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    picked.into_iter().map(|e| e.feature.clone()).collect()
}

/// Scatter points `(we, feature_value)` for one feature.
pub fn scatter(table: &NormalizedTable, feature: &str) -> Result<Vec<(f64, f64)>> {
    let j = table
        .feature_index(feature)
        .ok_or_else(|| Error::Schema(format!("unknown feature '{feature}'")))?;
    let we = table_wealth(table)?;
    Ok(we.into_iter().zip(table.column(j)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn we(pd: f64, mhi: f64, pne: f64) -> f64 {
        wealth_estimate(&WealthInputs::new(pd, mhi, pne).unwrap())
    }

    #[test]
    fn wealth_examples() {
        assert!((we(0.5, 0.4, 0.25) - 0.15).abs() < 1e-15);
        assert_eq!(we(0.3, 0.9, 1.0), 0.0);
        assert_eq!(we(1.0, 1.0, 0.0), 1.0);
        assert!(matches!(WealthInputs::new(1.1, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(WealthInputs::new(0.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn wealth_monotone_on_grid() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        for &a in &grid {
            for &b in &grid {
                for w in grid.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    assert!(we(lo, a, b) <= we(hi, a, b));
                    assert!(we(a, lo, b) <= we(a, hi, b));
                    assert!(we(a, b, lo) >= we(a, b, hi));
                }
            }
        }
    }

    #[test]
    fn pearson_exact_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    fn report(pairs: &[(&str, f64)]) -> CorrelationReport {
        CorrelationReport {
            entries: pairs
                .iter()
                .map(|(f, r)| FeatureCorrelation {
                    feature: f.to_string(),
                    pearson_r: *r,
                    constant: false,
                })
                .collect(),
            threshold: 0.0,
            selected: vec![],
        }
    }

    #[test]
    fn selection_rules() {
        let r = report(&[("a", 0.6), ("b", 0.2)]);
        assert_eq!(select_features(&r, 0.3), vec!["a"]);
        assert!(select_features(&r, 1.001).is_empty());
        let mut r = report(&[("b", -0.5), ("a", 0.5), ("c", 0.9)]);
        assert_eq!(select_features(&r, 0.0), vec!["c", "a", "b"]);
        r.entries.push(FeatureCorrelation {
            feature: "k".into(),
            pearson_r: 0.0,
            constant: true,
        });
        assert_eq!(select_features(&r, 0.0).len(), 3);
    }

    fn table(columns: &[(&str, Vec<f64>)]) -> NormalizedTable {
        let n = columns[0].1.len();
        NormalizedTable {
            zipcodes: (0..n).map(|i| format!("{i:05}")).collect(),
            counties: vec!["C".into(); n],
            feature_names: columns.iter().map(|(c, _)| c.to_string()).collect(),
            mins: columns.iter().map(|_| 0.0).collect(),
            maxs: columns.iter().map(|(c, _)| if *c == PCT_NOT_EARNING { 100.0 } else { 1.0 }).collect(),
            rows: (0..n).map(|i| columns.iter().map(|(_, v)| v[i]).collect()).collect(),
        }
    }

    #[test]
    fn correlate_self_copy_and_constant() {
        let pd = vec![0.0, 0.5, 1.0, 0.25];
        let mhi = vec![1.0, 0.5, 1.0, 0.0];
        let pne = vec![0.1, 0.2, 0.3, 0.4];
        let we: Vec<f64> = (0..4).map(|i| pd[i] * mhi[i] * (1.0 - pne[i])).collect();
        let t = table(&[
            (POPULATION_DENSITY, pd),
            (MEDIAN_HOUSEHOLD_INCOME, mhi),
            (PCT_NOT_EARNING, pne),
            ("f_copy", we),
            ("f_const", vec![0.0; 4]),
        ]);
        let rep = correlate_features(&t).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert!((rep.r("f_copy").unwrap() - 1.0).abs() < 1e-12);
        let c = rep.entries.iter().find(|e| e.feature == "f_const").unwrap();
        assert!(c.constant);
        assert_eq!(c.pearson_r, 0.0);
        assert_eq!(rep.selected, vec!["f_copy"]);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            x in proptest::collection::vec(-100.0f64..100.0, 3..40),
            seed in proptest::collection::vec(-100.0f64..100.0, 40),
            a in 0.01f64..50.0,
            b in -50.0f64..50.0,
        ) {
            let y: Vec<f64> = seed[..x.len()].to_vec();
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
            let r = pearson(&x, &y).unwrap();
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let rt = pearson(&xt, &y).unwrap();
            prop_assert!((r - rt).abs() <= 1e-12, "{} vs {}", r, rt);
            prop_assert!((pearson(&x, &x).unwrap() - 1.0).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
