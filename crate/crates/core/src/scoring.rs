//! Per-(county, network) scores from the global and local models, their
//! fusion, rankings, and the cross-county feature-frequency table.
//!
//! The global county score of a network sums, over the county's zipcodes,
//! `zip score * average name-tag score * ATM count`. The local score fits a
//! per-county model (k-means labels, random-forest importances, top
//! features) and multiplies its weighted feature mean by the network's
//! average name-tag score in the county. Both are min-max normalized across
//! all (county, network) rows before fusion.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{atm_frequency, AtmRecord, FrequencyIndex, NormalizedTable};
use crate::error::{Error, Result, ResultExt};
use crate::forest::{forest_fit, forest_seed, ForestParams};
use crate::global_model::{GlobalWeights, ZipScore};
use crate::kmeans::{kmeans_fit, KMeansParams};
use crate::rng::{derive_seed, Stage};

pub const DEFAULT_ALPHA: f64 = 0.35;
pub const DEFAULT_TOP_FEATURES: usize = 20;
pub const DEFAULT_K: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the global model; the local model gets `1 - alpha`.
    pub alpha: f64,
    pub top_features: usize,
    pub k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: DEFAULT_ALPHA,
            top_features: DEFAULT_TOP_FEATURES,
            k: DEFAULT_K,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.top_features == 0 {
            return Err(Error::Validation("top-features must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything the local pipeline needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub fusion: FusionConfig,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub forest: ForestParams,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let km = KMeansParams::default();
        ScoringConfig {
            fusion: FusionConfig::default(),
            restarts: km.restarts,
            kmeans_max_iter: km.max_iter,
            kmeans_tol: km.tol,
            forest: ForestParams::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.restarts == 0 {
            return Err(Error::Validation("restarts must be at least 1".into()));
        }
        if self.forest.n_trees == 0 {
            return Err(Error::Validation("trees must be at least 1".into()));
        }
        if self.kmeans_tol.is_nan() || self.kmeans_tol < 0.0 {
            return Err(Error::Validation("k-means tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `s_zip * asa * freq`.
pub fn zip_atm_score(s_zip: f64, asa: f64, freq: u32) -> f64 {
    s_zip * asa * f64::from(freq)
}

/// `(1 - alpha) * local + alpha * global`.
pub fn fuse(s_local_norm: f64, s_global_norm: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1]")));
    }
    Ok((1.0 - alpha) * s_local_norm + alpha * s_global_norm)
}

/// Indices of the `k` largest positive importances, descending, ties by index.
pub fn top_k_features(importance: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).filter(|&i| importance[i] > 0.0).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    count: u32,
    score_sum: f64,
}

impl Tally {
    fn mean(&self) -> f64 {
        self.score_sum / f64::from(self.count)
    }
}

/// Name-tag score totals per (zipcode, network) and (county, network).
#[derive(Debug, Clone, Default)]
pub struct AtmIndex {
    by_zip: HashMap<(String, String), Tally>,
    by_county: BTreeMap<(String, String), Tally>,
}

impl AtmIndex {
    pub fn build(atms: &[AtmRecord], zip_county: &HashMap<String, String>) -> Result<Self> {
        Self::build_with(atms, zip_county, |a| f64::from(a.relative_score))
    }

    /// Builds with a custom per-ATM score in place of the name-tag score.
    pub fn build_with(
        atms: &[AtmRecord],
        zip_county: &HashMap<String, String>,
        score: impl Fn(&AtmRecord) -> f64,
    ) -> Result<Self> {
        let mut index = AtmIndex::default();
        for a in atms {
            let county = zip_county.get(&a.zipcode).ok_or_else(|| {
                Error::Validation(format!("ATM zipcode {} not in the zipcode table", a.zipcode))
            })?;
            let s = score(a);
            for t in [
                index.by_zip.entry((a.zipcode.clone(), a.network.clone())).or_default(),
                index.by_county.entry((county.clone(), a.network.clone())).or_default(),
            ] {
                t.count += 1;
                t.score_sum += s;
            }
        }
        Ok(index)
    }

    /// Average score of a network's ATMs in a zipcode.
    pub fn asa_zip(&self, network: &str, zipcode: &str) -> Option<f64> {
        self.by_zip
            .get(&(zipcode.to_string(), network.to_string()))
            .map(Tally::mean)
    }

    /// Average score of a network's ATMs in a county.
    pub fn asa_county(&self, network: &str, county: &str) -> Option<f64> {
        self.by_county
            .get(&(county.to_string(), network.to_string()))
            .map(Tally::mean)
    }

    /// Networks with at least one ATM in the county, sorted.
    pub fn networks_in(&self, county: &str) -> Vec<String> {
        self.by_county
            .keys()
            .filter(|(c, _)| c == county)
            .map(|(_, n)| n.clone())
            .collect()
    }
}

/// Normalized table plus the derived indexes the scoring functions share.
#[derive(Debug, Clone)]
pub struct ScoringInputs {
    pub table: NormalizedTable,
    /// Global score per table row.
    pub zip_scores: Vec<ZipScore>,
    pub frequency: FrequencyIndex,
    pub atms: AtmIndex,
    /// Row indices per county, counties sorted by name.
    pub county_rows: BTreeMap<String, Vec<usize>>,
}

impl ScoringInputs {
    pub fn new(table: NormalizedTable, atms: &[AtmRecord], weights: &GlobalWeights) -> Result<Self> {
        let resolved = weights.resolve(&table.feature_names)?;
        let zip_scores = table
            .zipcodes
            .iter()
            .zip(&table.rows)
            .map(|(z, row)| ZipScore {
                zipcode: z.clone(),
                y_global: resolved.score(row),
            })
            .collect();
        Self::with_zip_scores(table, atms, zip_scores)
    }

    pub fn with_zip_scores(table: NormalizedTable, atms: &[AtmRecord], zip_scores: Vec<ZipScore>) -> Result<Self> {
        if zip_scores.len() != table.len() {
            return Err(Error::Validation("one zip score per table row required".into()));
        }
        let zip_county: HashMap<String, String> = table
            .zipcodes
            .iter()
            .cloned()
            .zip(table.counties.iter().cloned())
            .collect();
        let atm_index = AtmIndex::build(atms, &zip_county)?;
        Ok(ScoringInputs {
            county_rows: table.county_rows(),
            frequency: atm_frequency(atms),
            atms: atm_index,
            zip_scores,
            table,
        })
    }

    fn rows_of(&self, county: &str) -> Result<&[usize]> {
        self.county_rows
            .get(county)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Domain(format!("unknown county '{county}'")))
    }

    fn county_seed(&self, county: &str, seed: u64) -> Result<u64> {
        let idx = self
            .county_rows
            .keys()
            .position(|c| c == county)
            .ok_or_else(|| Error::Domain(format!("unknown county '{county}'")))?;
        Ok(derive_seed(seed, Stage::County, idx as u64))
    }
}

/// Global score of a network in a county; 0 when the network is absent.
pub fn county_global_score(network: &str, county: &str, inputs: &ScoringInputs) -> Result<f64> {
    let mut total = 0.0;
    for &i in inputs.rows_of(county)? {
        let zip = &inputs.table.zipcodes[i];
        let freq = inputs.frequency.count(zip, network);
        if freq == 0 {
            continue;
        }
        let asa = inputs.atms.asa_zip(network, zip).unwrap_or(0.0);
        total += zip_atm_score(inputs.zip_scores[i].y_global, asa, freq);
    }
    Ok(total)
}

/// Network-independent part of the local model for one county.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyModel {
    pub county: String,
    pub n_zipcodes: usize,
    /// Clusters actually used (`min(k, n)`); 0 when clustering was skipped.
    pub k_used: usize,
    pub importances: Vec<f64>,
    pub top_features: Vec<usize>,
    /// Importances over `top_features`, renormalized to sum 1.
    pub top_weights: Vec<f64>,
    /// County mean of each top feature.
    pub top_means: Vec<f64>,
    /// `sum(top_weights * top_means)`.
    pub base_score: f64,
    /// The local model is uninformative (single zipcode or no split).
    pub fallback: bool,
}

/// Clusters the county's rows, fits a forest on the labels, and keeps the
/// top features. `county_seed` seeds both stages.
pub fn fit_county_model(
    table: &NormalizedTable,
    county: &str,
    rows: &[usize],
    config: &ScoringConfig,
    county_seed: u64,
) -> Result<CountyModel> {
    let d = table.n_features();
    let mut model = CountyModel {
        county: county.to_string(),
        n_zipcodes: rows.len(),
        k_used: 0,
        importances: vec![0.0; d],
        top_features: Vec::new(),
        top_weights: Vec::new(),
        top_means: Vec::new(),
        base_score: 0.0,
        fallback: true,
    };
    if rows.len() < 2 {
        return Ok(model);
    }
    let points: Vec<Vec<f64>> = rows.iter().map(|&i| table.rows[i].clone()).collect();
    let k = config.fusion.k.min(points.len()).max(1);
    let params = KMeansParams {
        k,
        max_iter: config.kmeans_max_iter,
        tol: config.kmeans_tol,
        restarts: config.restarts,
    };
    let clusters = kmeans_fit(&points, &params, derive_seed(county_seed, Stage::KMeans, 0))
        .module("kmeans", format!("county '{county}'"))?;
    model.k_used = k;
    let forest = forest_fit(&points, &clusters.labels, &config.forest, forest_seed(county_seed))
        .module("forest", format!("county '{county}'"))?;
    model.importances = forest.importances;
    model.top_features = top_k_features(&model.importances, config.fusion.top_features);
    if model.top_features.is_empty() {
        return Ok(model);
    }
    let mass: f64 = model.top_features.iter().map(|&f| model.importances[f]).sum();
    model.top_weights = model.top_features.iter().map(|&f| model.importances[f] / mass).collect();
    let n = points.len() as f64;
    model.top_means = model
        .top_features
        .iter()
        .map(|&f| points.iter().map(|p| p[f]).sum::<f64>() / n)
        .collect();
    model.base_score = model.top_weights.iter().zip(&model.top_means).map(|(w, m)| w * m).sum();
    model.fallback = false;
    Ok(model)
}

/// Local score of a network in a county, fitting the county model from
/// scratch. 0 when the network is absent or the local model falls back.
pub fn county_local_score(
    network: &str,
    county: &str,
    inputs: &ScoringInputs,
    config: &ScoringConfig,
    seed: u64,
) -> Result<f64> {
    let rows = inputs.rows_of(county)?;
    let model = fit_county_model(&inputs.table, county, rows, config, inputs.county_seed(county, seed)?)?;
    Ok(local_score(&model, network, &inputs.atms))
}

fn local_score(model: &CountyModel, network: &str, atms: &AtmIndex) -> f64 {
    match atms.asa_county(network, &model.county) {
        Some(asa) => model.base_score * asa,
        None => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub county: String,
    pub network: String,
    pub s_local: f64,
    pub s_global: f64,
    pub s_local_norm: f64,
    pub s_global_norm: f64,
    pub s_fused: f64,
    /// Local score replaced by the global one.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyRanking {
    pub county: String,
    pub networks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyFeatures {
    pub county: String,
    pub n_zipcodes: usize,
    pub k_used: usize,
    pub fallback: bool,
    /// Top features with their renormalized weights.
    pub top_features: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrequency {
    pub feature: String,
    pub county_count: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub alpha: f64,
    pub local_weight: f64,
    pub top_features: usize,
    pub k: usize,
    pub seed: u64,
    pub rows: Vec<ScoreRow>,
    pub rankings: Vec<CountyRanking>,
    pub county_features: Vec<CountyFeatures>,
    pub feature_frequency: Vec<FeatureFrequency>,
}

impl ScoreReport {
    pub fn row(&self, county: &str, network: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.county == county && r.network == network)
    }

    pub fn ranking(&self, county: &str) -> Option<&[String]> {
        self.rankings
            .iter()
            .find(|r| r.county == county)
            .map(|r| r.networks.as_slice())
    }
}

/// Networks by descending fused score, ties by name.
pub fn rank_networks(rows: &[ScoreRow]) -> Vec<String> {
    let mut sorted: Vec<&ScoreRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.s_fused.total_cmp(&a.s_fused).then_with(|| a.network.cmp(&b.network)));
    sorted.into_iter().map(|r| r.network.clone()).collect()
}

/// How many counties list each feature among their top features, ranked by
/// descending count then name.
pub fn feature_frequency_table<S: AsRef<str>>(per_county: &[Vec<S>]) -> Vec<FeatureFrequency> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for list in per_county {
        let mut seen: Vec<&str> = list.iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for f in seen {
            *counts.entry(f).or_insert(0) += 1;
        }
    }
    let mut table: Vec<(&str, usize)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    table
        .into_iter()
        .enumerate()
        .map(|(i, (f, c))| FeatureFrequency {
            feature: f.to_string(),
            county_count: c,
            rank: i + 1,
        })
        .collect()
}

struct MinMax {
    min: f64,
    max: f64,
}

impl MinMax {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let mut m = MinMax {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        for v in values {
            m.min = m.min.min(v);
            m.max = m.max.max(v);
        }
        m
    }

    fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Fits every county's local model (in parallel) and assembles the report.
pub fn score_all(inputs: &ScoringInputs, config: &ScoringConfig, seed: u64) -> Result<ScoreReport> {
    config.validate()?;
    let counties: Vec<(&String, &Vec<usize>)> = inputs.county_rows.iter().collect();
    let models: Vec<CountyModel> = counties
        .par_iter()
        .enumerate()
        .map(|(idx, (county, rows))| {
            let county_seed = derive_seed(seed, Stage::County, idx as u64);
            fit_county_model(&inputs.table, county, rows, config, county_seed)
        })
        .collect::<Result<_>>()?;
    score_with_models(inputs, &models, config, seed)
}

/// Assembles a report from already fitted county models.
pub fn score_with_models(
    inputs: &ScoringInputs,
    models: &[CountyModel],
    config: &ScoringConfig,
    seed: u64,
) -> Result<ScoreReport> {
    let alpha = config.fusion.alpha;
    let mut rows = Vec::new();
    for model in models {
        for network in inputs.atms.networks_in(&model.county) {
            let s_global = county_global_score(&network, &model.county, inputs)?;
            let s_local = local_score(model, &network, &inputs.atms);
            rows.push(ScoreRow {
                county: model.county.clone(),
                network,
                s_local,
                s_global,
                s_local_norm: 0.0,
                s_global_norm: 0.0,
                s_fused: 0.0,
                fallback: model.fallback,
            });
        }
    }
    let global_range = MinMax::over(rows.iter().map(|r| r.s_global));
    let local_range = MinMax::over(rows.iter().filter(|r| !r.fallback).map(|r| r.s_local));
    for r in &mut rows {
        r.s_global_norm = global_range.scale(r.s_global);
        r.s_local_norm = if r.fallback { r.s_global_norm } else { local_range.scale(r.s_local) };
        r.s_fused = fuse(r.s_local_norm, r.s_global_norm, alpha)?;
    }

    let rankings = models
        .iter()
        .map(|m| {
            let county_rows: Vec<ScoreRow> = rows.iter().filter(|r| r.county == m.county).cloned().collect();
            CountyRanking {
                county: m.county.clone(),
                networks: rank_networks(&county_rows),
            }
        })
        .collect();
    let names = &inputs.table.feature_names;
    let county_features: Vec<CountyFeatures> = models
        .iter()
        .map(|m| CountyFeatures {
            county: m.county.clone(),
            n_zipcodes: m.n_zipcodes,
            k_used: m.k_used,
            fallback: m.fallback,
            top_features: m
                .top_features
                .iter()
                .zip(&m.top_weights)
                .map(|(&f, &w)| (names[f].clone(), w))
                .collect(),
        })
        .collect();
    let lists: Vec<Vec<&str>> = county_features
        .iter()
        .map(|c| c.top_features.iter().map(|(f, _)| f.as_str()).collect())
        .collect();
    let feature_frequency = feature_frequency_table(&lists);
    Ok(ScoreReport {
        alpha,
        local_weight: 1.0 - alpha,
        top_features: config.fusion.top_features,
        k: config.fusion.k,
        seed,
        rows,
        rankings,
        county_features,
        feature_frequency,
    })
}
