//! Output files: score/ranking/frequency CSVs, the JSON report, correlation
//! exports, placement plans and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizer::{Candidate, Plan};
use crate::scoring::{rank_networks, ScoreReport, ScoreRow};
use crate::wealth::CorrelationReport;

pub const SCORES_FILE: &str = "scores.csv";
pub const RANKINGS_FILE: &str = "rankings.csv";
pub const FEATURE_FREQUENCY_FILE: &str = "feature_frequency.csv";
pub const TOP_FEATURES_FILE: &str = "top_features.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const SCATTER_DIR: &str = "scatter";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("csv encoding failed: {e}")))
}

/// Collects files in memory and writes them in one pass.
#[derive(Debug, Default)]
pub struct FileSet {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl FileSet {
    pub fn add(&mut self, relative: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.insert(relative.into(), bytes);
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(p, b)| (p.to_string_lossy().replace('\\', "/"), sha256_hex(b)))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn scores_csv(report: &ScoreReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["county", "network", "s_local", "s_global", "s_fused"],
        report.rows.iter().map(|r| {
            [
                r.county.clone(),
                r.network.clone(),
                r.s_local.to_string(),
                r.s_global.to_string(),
                r.s_fused.to_string(),
            ]
        }),
    )
}

pub fn rankings_csv(report: &ScoreReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for ranking in &report.rankings {
        for (i, network) in ranking.networks.iter().enumerate() {
            let fused = report
                .row(&ranking.county, network)
                .map(|r| r.s_fused)
                .unwrap_or(0.0);
            rows.push([
                ranking.county.clone(),
                (i + 1).to_string(),
                network.clone(),
                fused.to_string(),
            ]);
        }
    }
    csv_bytes(&["county", "rank", "network", "s_fused"], rows)
}

pub fn feature_frequency_csv(report: &ScoreReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["feature", "county_count", "rank"],
        report
            .feature_frequency
            .iter()
            .map(|f| [f.feature.clone(), f.county_count.to_string(), f.rank.to_string()]),
    )
}

pub fn top_features_csv(report: &ScoreReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for c in &report.county_features {
        for (i, (f, w)) in c.top_features.iter().enumerate() {
            rows.push([c.county.clone(), (i + 1).to_string(), f.clone(), w.to_string()]);
        }
    }
    csv_bytes(&["county", "rank", "feature", "weight"], rows)
}

/// Structured report with county scores, rankings and the frequency table.
pub fn report_json(report: &ScoreReport) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Sections<'a> {
        alpha: f64,
        local_weight: f64,
        top_features: usize,
        k: usize,
        seed: u64,
        county_scores: &'a [ScoreRow],
        rankings: &'a [crate::scoring::CountyRanking],
        county_features: &'a [crate::scoring::CountyFeatures],
        feature_frequency: &'a [crate::scoring::FeatureFrequency],
    }
    let s = Sections {
        alpha: report.alpha,
        local_weight: report.local_weight,
        top_features: report.top_features,
        k: report.k,
        seed: report.seed,
        county_scores: &report.rows,
        rankings: &report.rankings,
        county_features: &report.county_features,
        feature_frequency: &report.feature_frequency,
    };
    let mut out = serde_json::to_vec_pretty(&s).map_err(|e| Error::Validation(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn report_files(report: &ScoreReport) -> Result<FileSet> {
    let mut files = FileSet::default();
    files.add(SCORES_FILE, scores_csv(report)?);
    files.add(RANKINGS_FILE, rankings_csv(report)?);
    files.add(FEATURE_FREQUENCY_FILE, feature_frequency_csv(report)?);
    files.add(TOP_FEATURES_FILE, top_features_csv(report)?);
    files.add(REPORT_FILE, report_json(report)?);
    Ok(files)
}

pub fn correlation_csv(report: &CorrelationReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["feature", "pearson_r"],
        report.entries.iter().map(|e| [e.feature.clone(), e.pearson_r.to_string()]),
    )
}

pub fn scatter_csv(points: &[(f64, f64)]) -> Result<Vec<u8>> {
    csv_bytes(
        &["we", "feature_value"],
        points.iter().map(|(w, v)| [w.to_string(), v.to_string()]),
    )
}

pub fn plan_csv(plan: &Plan, candidates: &[Candidate]) -> Result<Vec<u8>> {
    let mut rows: Vec<[String; 3]> = plan
        .selected
        .iter()
        .map(|id| {
            let c = candidates.iter().find(|c| &c.id == id).expect("plan ids come from candidates");
            [c.id.clone(), c.score.to_string(), c.cost.to_string()]
        })
        .collect();
    rows.push(["TOTAL".into(), plan.total_score.to_string(), plan.total_cost.to_string()]);
    csv_bytes(&["id", "score", "cost"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, replayable as-is.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub flags: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    /// Output file (relative to the output directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Validation(format!("bad manifest: {e}")))
    }
}

/// Reads `scores.csv` rows back (normalized fields are not stored and stay 0).
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    #[derive(Deserialize)]
    struct Raw {
        county: String,
        network: String,
        s_local: f64,
        s_global: f64,
        s_fused: f64,
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<Raw>() {
        let r = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push(ScoreRow {
            county: r.county,
            network: r.network,
            s_local: r.s_local,
            s_global: r.s_global,
            s_local_norm: 0.0,
            s_global_norm: 0.0,
            s_fused: r.s_fused,
            fallback: false,
        });
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{} has no score rows", path.display())));
    }
    Ok(rows)
}

/// Per-county rankings from score rows, counties sorted by name.
pub fn rankings_from_rows(rows: &[ScoreRow]) -> Vec<(String, Vec<String>)> {
    let mut by_county: BTreeMap<&str, Vec<ScoreRow>> = BTreeMap::new();
    for r in rows {
        by_county.entry(&r.county).or_default().push(r.clone());
    }
    by_county
        .into_iter()
        .map(|(c, rs)| (c.to_string(), rank_networks(&rs)))
        .collect()
}

/// Reads `costs.csv` (`county, cost`).
pub fn read_costs(path: &Path) -> Result<BTreeMap<String, f64>> {
    #[derive(Deserialize)]
    struct Raw {
        county: String,
        cost: f64,
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<Raw>() {
        let r = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if out.insert(r.county.clone(), r.cost).is_some() {
            return Err(Error::Validation(format!("duplicate cost for county '{}'", r.county)));
        }
    }
    Ok(out)
}

/// Builds county candidates from score rows. With `network`, each county's
/// score is that network's fused score; otherwise the mean fused score over
/// the networks present in the county. Missing costs default to 1.0 only
/// when no cost table is given.
pub fn county_candidates(
    rows: &[ScoreRow],
    costs: Option<&BTreeMap<String, f64>>,
    network: Option<&str>,
) -> Result<Vec<Candidate>> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if network.is_some_and(|n| n != r.network) {
            continue;
        }
        let e = acc.entry(&r.county).or_insert((0.0, 0));
        e.0 += r.s_fused;
        e.1 += 1;
    }
    if acc.is_empty() {
        return Err(Error::Validation(match network {
            Some(n) => format!("network '{n}' has no score rows"),
            None => "no score rows".into(),
        }));
    }
    acc.into_iter()
        .map(|(county, (sum, n))| {
            let cost = match costs {
                Some(table) => *table
                    .get(county)
                    .ok_or_else(|| Error::Validation(format!("no cost given for county '{county}'")))?,
                None => 1.0,
            };
            Candidate::new(county, sum / n as f64, cost)
        })
        .collect()
}
