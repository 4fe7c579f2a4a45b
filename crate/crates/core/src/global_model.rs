//! Fixed-weight demographic scoring of zipcodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Published weights for the 11 global features. They are already
/// normalized (the printed values sum to 0.999).
pub const DEFAULT_WEIGHTS: [(&str, f64); 11] = [
    ("transportation_pct", 0.13),
    ("employment_pct", 0.083),
    ("private_primary_school_pct", 0.083),
    ("median_home_value", 0.093),
    ("rented_1br_pct", 0.102),
    ("educated_pct", 0.074),
    ("population_density", 0.167),
    ("median_household_income", 0.045),
    ("earning_pct", 0.083),
    ("single_pct", 0.065),
    ("single_with_roommates_pct", 0.074),
];

/// Slack allowed on the sum of user-supplied normalized weights, so that
/// rounded published vectors load.
pub const NORMALIZED_SUM_SLACK: f64 = 0.01;

/// Max-shifted softmax.
pub fn softmax(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("softmax input must be finite".into()));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalWeights {
    entries: Vec<(String, f64)>,
    normalized: bool,
}

impl GlobalWeights {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn weight(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|(f, _)| f == feature).map(|(_, w)| *w)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Raw weights awaiting softmax normalization.
    pub fn raw(entries: Vec<(String, f64)>) -> Result<Self> {
        check_names(&entries)?;
        Ok(GlobalWeights {
            entries,
            normalized: false,
        })
    }

    /// Weights taken as already normalized: each in [0, 1], summing to 1
    /// within [`NORMALIZED_SUM_SLACK`].
    pub fn normalized(entries: Vec<(String, f64)>) -> Result<Self> {
        check_names(&entries)?;
        if entries.iter().any(|(_, w)| !(0.0..=1.0).contains(w)) {
            return Err(Error::Validation("normalized weights must lie in [0, 1]".into()));
        }
        let sum: f64 = entries.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > NORMALIZED_SUM_SLACK {
            return Err(Error::Validation(format!(
                "normalized weights sum to {sum}; pass them as raw weights to softmax-normalize"
            )));
        }
        Ok(GlobalWeights {
            entries,
            normalized: true,
        })
    }

    /// Applies softmax to raw weights; normalized weights are returned as is.
    pub fn normalize(self) -> Result<Self> {
        if self.normalized {
            return Ok(self);
        }
        let raw: Vec<f64> = self.entries.iter().map(|(_, w)| *w).collect();
        let norm = softmax(&raw)?;
        Ok(GlobalWeights {
            entries: self.entries.into_iter().zip(norm).map(|((f, _), w)| (f, w)).collect(),
            normalized: true,
        })
    }

    /// Parses `feature = weight` lines; `#` starts a comment.
    pub fn parse(text: &str, raw: bool) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("weights line {}: expected '<feature> = <weight>'", i + 1))
            })?;
            let w: f64 = value.trim().parse().map_err(|_| Error::Parse {
                line: i as u64 + 1,
                message: format!("weight '{}' is not a number", value.trim()),
            })?;
            entries.push((name.trim().to_string(), w));
        }
        if raw {
            GlobalWeights::raw(entries)
        } else {
            GlobalWeights::normalized(entries)
        }
    }

    pub fn to_config_text(&self) -> String {
        self.entries
            .iter()
            .map(|(f, w)| format!("{f} = {w}\n"))
            .collect()
    }

    /// Resolves feature names against table columns.
    pub fn resolve(&self, feature_names: &[String]) -> Result<ResolvedWeights> {
        if !self.normalized {
            return Err(Error::Domain("global weights must be normalized before scoring".into()));
        }
        let terms = self
            .entries
            .iter()
            .map(|(f, w)| {
                feature_names
                    .iter()
                    .position(|n| n == f)
                    .map(|j| (j, *w))
                    .ok_or_else(|| Error::Schema(format!("weight feature '{f}' is not a table column")))
            })
            .collect::<Result<_>>()?;
        Ok(ResolvedWeights { terms })
    }
}

fn check_names(entries: &[(String, f64)]) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Validation("weight vector is empty".into()));
    }
    for (i, (name, w)) in entries.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Validation("empty feature name in weights".into()));
        }
        if !w.is_finite() {
            return Err(Error::Validation(format!("weight for '{name}' is not finite")));
        }
        if entries[..i].iter().any(|(n, _)| n == name) {
            return Err(Error::Validation(format!("feature '{name}' weighted twice")));
        }
    }
    Ok(())
}

pub fn default_global_weights() -> GlobalWeights {
    GlobalWeights {
        entries: DEFAULT_WEIGHTS.iter().map(|(f, w)| (f.to_string(), *w)).collect(),
        normalized: true,
    }
}

/// Weights bound to column indices of a particular table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedWeights {
    terms: Vec<(usize, f64)>,
}

impl ResolvedWeights {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, w)| w * row[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipScore {
    pub zipcode: String,
    pub y_global: f64,
}

/// Linear score of one normalized zipcode row over the weighted features.
pub fn global_zip_score(
    weights: &GlobalWeights,
    feature_names: &[String],
    zipcode: &str,
    row: &[f64],
) -> Result<ZipScore> {
    if row.len() != feature_names.len() {
        return Err(Error::Domain(format!(
            "row has {} values for {} features",
            row.len(),
            feature_names.len()
        )));
    }
    let resolved = weights.resolve(feature_names)?;
    Ok(ZipScore {
        zipcode: zipcode.to_string(),
        y_global: resolved.score(row),
    })
}
