//! Zipcode and ATM tables: CSV ingestion, validation, normalization and
//! per-zipcode ATM counts.

mod nametag;
pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nametag::{classify_name_tag, KeywordTable, NameTag, DEFAULT_KEYWORDS};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};

pub const ZIPCODE: &str = "zipcode";
pub const COUNTY: &str = "county";
pub const LATITUDE: &str = "latitude";
pub const LONGITUDE: &str = "longitude";
/// Optional pass-through column; not consumed by any model.
pub const NEAREST_ZIPCODES: &str = "nearest_zipcodes";

pub const POPULATION_DENSITY: &str = "population_density";
pub const MEDIAN_HOUSEHOLD_INCOME: &str = "median_household_income";
pub const PCT_NOT_EARNING: &str = "pct_not_earning";

/// Required numeric feature columns, in file order.
pub const FEATURE_COLUMNS: [&str; 12] = [
    POPULATION_DENSITY,
    MEDIAN_HOUSEHOLD_INCOME,
    PCT_NOT_EARNING,
    "transportation_pct",
    "employment_pct",
    "private_primary_school_pct",
    "median_home_value",
    "rented_1br_pct",
    "educated_pct",
    "earning_pct",
    "single_pct",
    "single_with_roommates_pct",
];

/// Prefix for additional numeric feature columns.
pub const EXTRA_FEATURE_PREFIX: &str = "f_";

pub const ATM_COLUMNS: [&str; 4] = ["network", "street_address", "city", "zipcode"];

fn is_percentage(column: &str) -> bool {
    column == PCT_NOT_EARNING || column.ends_with("_pct")
}

fn is_nonnegative(column: &str) -> bool {
    matches!(column, POPULATION_DENSITY | MEDIAN_HOUSEHOLD_INCOME | "median_home_value")
}

pub fn is_valid_zipcode(z: &str) -> bool {
    z.len() == 5 && z.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipcodeRecord {
    pub zipcode: String,
    pub county: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Feature columns in file order.
    pub features: IndexMap<String, f64>,
    pub nearest_zipcodes: Option<String>,
}

impl ZipcodeRecord {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.features.get(name).copied()
    }

    /// Checks record-level invariants. `line` is used for error context.
    pub fn validate(&self, line: u64) -> Result<()> {
        if !is_valid_zipcode(&self.zipcode) {
            return Err(Error::Validation(format!(
                "line {line}: zipcode '{}' is not five digits",
                self.zipcode
            )));
        }
        if self.county.trim().is_empty() {
            return Err(Error::Validation(format!("line {line}: empty county")));
        }
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Validation(format!(
                "line {line}: coordinates ({}, {}) out of range",
                self.latitude, self.longitude
            )));
        }
        for column in FEATURE_COLUMNS {
            if !self.features.contains_key(column) {
                return Err(Error::Schema(format!("missing required column '{column}'")));
            }
        }
        for (name, &value) in &self.features {
            if !value.is_finite() {
                return Err(Error::Validation(format!("line {line}: {name} is not finite")));
            }
            if is_percentage(name) && !(0.0..=100.0).contains(&value) {
                return Err(Error::Validation(format!(
                    "line {line}: {name} = {value} is not a percentage in [0, 100]"
                )));
            }
            if is_nonnegative(name) && value < 0.0 {
                return Err(Error::Validation(format!("line {line}: {name} = {value} is negative")));
            }
        }
        Ok(())
    }
}

/// A raw ATM row as it appears in `atms.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtmRow {
    pub network: String,
    pub street_address: String,
    pub city: String,
    pub zipcode: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtmRecord {
    pub network: String,
    pub street_address: String,
    pub city: String,
    pub zipcode: String,
    pub name_tag: NameTag,
    pub relative_score: u8,
}

impl AtmRecord {
    pub fn from_row(row: AtmRow, keywords: &KeywordTable) -> Self {
        let name_tag = keywords.classify(&row.street_address);
        AtmRecord {
            network: row.network,
            street_address: row.street_address,
            city: row.city,
            zipcode: row.zipcode,
            name_tag,
            relative_score: name_tag.relative_score(),
        }
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io("<csv stream>", e),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn load_zipcodes(path: impl AsRef<Path>) -> Result<Vec<ZipcodeRecord>> {
    read_zipcodes(open(path.as_ref())?)
}

/// Reads a zipcode table from any reader; see [`load_zipcodes`].
pub fn read_zipcodes<R: Read>(reader: R) -> Result<Vec<ZipcodeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Schema("zipcode file has no header row".into()));
    }
    let position = |name: &str| headers.iter().position(|h| h == name);
    let required = [ZIPCODE, COUNTY, LATITUDE, LONGITUDE]
        .into_iter()
        .chain(FEATURE_COLUMNS);
    for column in required {
        if position(column).is_none() {
            return Err(Error::Schema(format!("missing required column '{column}'")));
        }
    }
    let mut seen = HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h) {
            return Err(Error::Schema(format!("duplicate column '{h}'")));
        }
        let known = [ZIPCODE, COUNTY, LATITUDE, LONGITUDE, NEAREST_ZIPCODES].contains(&h)
            || FEATURE_COLUMNS.contains(&h)
            || h.starts_with(EXTRA_FEATURE_PREFIX);
        if !known {
            return Err(Error::Schema(format!("unexpected column '{h}'")));
        }
    }
    let zip_col = position(ZIPCODE).unwrap();
    let county_col = position(COUNTY).unwrap();
    let lat_col = position(LATITUDE).unwrap();
    let lon_col = position(LONGITUDE).unwrap();
    let nearest_col = position(NEAREST_ZIPCODES);
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| FEATURE_COLUMNS.contains(h) || h.starts_with(EXTRA_FEATURE_PREFIX))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    let mut zipcodes = HashSet::new();
    for result in rdr.records() {
        let rec = result.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let number = |col: usize, name: &str| -> Result<f64> {
            let cell = rec.get(col).unwrap_or("");
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column '{name}': '{cell}' is not a number"),
            })
        };
        let mut features = IndexMap::with_capacity(feature_cols.len());
        for (col, name) in &feature_cols {
            features.insert(name.clone(), number(*col, name)?);
        }
        let record = ZipcodeRecord {
            zipcode: rec.get(zip_col).unwrap_or("").to_string(),
            county: rec.get(county_col).unwrap_or("").to_string(),
            latitude: number(lat_col, LATITUDE)?,
            longitude: number(lon_col, LONGITUDE)?,
            features,
            nearest_zipcodes: nearest_col
                .map(|c| rec.get(c).unwrap_or("").to_string())
                .filter(|s| !s.is_empty()),
        };
        record.validate(line)?;
        if !zipcodes.insert(record.zipcode.clone()) {
            return Err(Error::Validation(format!(
                "line {line}: duplicate zipcode {}",
                record.zipcode
            )));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Validation("zipcode file has no data rows".into()));
    }
    Ok(records)
}

pub fn write_zipcodes<W: Write>(writer: W, records: &[ZipcodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = records.first() else {
        return Err(Error::Validation("no zipcode records to write".into()));
    };
    let with_nearest = records.iter().any(|r| r.nearest_zipcodes.is_some());
    let mut header: Vec<&str> = vec![ZIPCODE, COUNTY, LATITUDE, LONGITUDE];
    header.extend(first.features.keys().map(String::as_str));
    if with_nearest {
        header.push(NEAREST_ZIPCODES);
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![
            r.zipcode.clone(),
            r.county.clone(),
            r.latitude.to_string(),
            r.longitude.to_string(),
        ];
        for name in first.features.keys() {
            let v = r.feature(name).ok_or_else(|| {
                Error::Validation(format!("zipcode {} lacks feature '{name}'", r.zipcode))
            })?;
            row.push(v.to_string());
        }
        if with_nearest {
            row.push(r.nearest_zipcodes.clone().unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv stream>", e))
}

/// Loads ATMs, classifying each address. Rows whose zipcode is not in
/// `zipcodes` are skipped and counted.
pub fn load_atms(
    path: impl AsRef<Path>,
    zipcodes: &[ZipcodeRecord],
    keywords: &KeywordTable,
) -> Result<(Vec<AtmRecord>, usize)> {
    read_atms(open(path.as_ref())?, zipcodes, keywords)
}

pub fn read_atm_rows<R: Read>(reader: R) -> Result<Vec<AtmRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Validation("ATM file is empty".into()));
    }
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(ATM_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))?;
    }
    let mut rows = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| rec.get(cols[i]).unwrap_or("").to_string();
        let row = AtmRow {
            network: get(0),
            street_address: get(1),
            city: get(2),
            zipcode: get(3),
        };
        if row.network.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty network name".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Validation("ATM file has no data rows".into()));
    }
    Ok(rows)
}

pub fn read_atms<R: Read>(
    reader: R,
    zipcodes: &[ZipcodeRecord],
    keywords: &KeywordTable,
) -> Result<(Vec<AtmRecord>, usize)> {
    let known: HashSet<&str> = zipcodes.iter().map(|z| z.zipcode.as_str()).collect();
    let mut rejected = 0;
    let mut atms = Vec::new();
    for row in read_atm_rows(reader)? {
        if known.contains(row.zipcode.as_str()) {
            atms.push(AtmRecord::from_row(row, keywords));
        } else {
            rejected += 1;
        }
    }
    if rejected > 0 {
        log::warn!("skipped {rejected} ATM rows with unknown zipcodes");
    }
    Ok((atms, rejected))
}

pub fn write_atm_rows<W: Write>(writer: W, rows: &[AtmRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ATM_COLUMNS).map_err(csv_error)?;
    for r in rows {
        w.write_record([&r.network, &r.street_address, &r.city, &r.zipcode])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv stream>", e))
}

/// Min-max scaled feature matrix over a zipcode table.
///
/// Each feature maps its table minimum to 0 and maximum to 1. A constant
/// column maps to 0 everywhere. Scaling parameters are kept so raw values
/// can be transformed (or recovered) later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTable {
    pub zipcodes: Vec<String>,
    pub counties: Vec<String>,
    pub feature_names: Vec<String>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    /// Row-major, one row per zipcode in ingestion order.
    pub rows: Vec<Vec<f64>>,
}

fn scale(value: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((value - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl NormalizedTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    /// Applies the stored scaling to a raw value of feature `index`.
    pub fn transform(&self, index: usize, raw: f64) -> f64 {
        scale(raw, self.mins[index], self.maxs[index])
    }

    /// Recovers the raw value for a normalized cell.
    pub fn raw_value(&self, row: usize, index: usize) -> f64 {
        let (min, max) = (self.mins[index], self.maxs[index]);
        min + self.rows[row][index] * (max - min)
    }

    /// Zipcode row indices grouped by county, counties in sorted order.
    pub fn county_rows(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.counties.iter().enumerate() {
            out.entry(c.clone()).or_default().push(i);
        }
        out
    }
}

pub fn normalize_features(records: &[ZipcodeRecord]) -> Result<NormalizedTable> {
    let Some(first) = records.first() else {
        return Err(Error::Validation("cannot normalize an empty table".into()));
    };
    let feature_names: Vec<String> = first.features.keys().cloned().collect();
    let d = feature_names.len();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    let mut raw = Vec::with_capacity(records.len());
    for r in records {
        if r.features.len() != d {
            return Err(Error::Validation(format!(
                "zipcode {} has {} features, expected {d}",
                r.zipcode,
                r.features.len()
            )));
        }
        let mut row = Vec::with_capacity(d);
        for (j, name) in feature_names.iter().enumerate() {
            let v = r.feature(name).ok_or_else(|| {
                Error::Validation(format!("zipcode {} lacks feature '{name}'", r.zipcode))
            })?;
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
            row.push(v);
        }
        raw.push(row);
    }
    let rows = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(j, v)| scale(v, mins[j], maxs[j]))
                .collect()
        })
        .collect();
    Ok(NormalizedTable {
        zipcodes: records.iter().map(|r| r.zipcode.clone()).collect(),
        counties: records.iter().map(|r| r.county.clone()).collect(),
        feature_names,
        mins,
        maxs,
        rows,
    })
}

/// ATM counts per zipcode and per (zipcode, network).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyIndex {
    pub by_zipcode: BTreeMap<String, u32>,
    pub by_zipcode_network: BTreeMap<(String, String), u32>,
}

impl FrequencyIndex {
    pub fn total(&self, zipcode: &str) -> u32 {
        self.by_zipcode.get(zipcode).copied().unwrap_or(0)
    }

    pub fn count(&self, zipcode: &str, network: &str) -> u32 {
        self.by_zipcode_network
            .get(&(zipcode.to_string(), network.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn grand_total(&self) -> u64 {
        self.by_zipcode.values().map(|&c| u64::from(c)).sum()
    }
}

pub fn atm_frequency(atms: &[AtmRecord]) -> FrequencyIndex {
    let mut index = FrequencyIndex::default();
    for a in atms {
        *index.by_zipcode.entry(a.zipcode.clone()).or_insert(0) += 1;
        *index
            .by_zipcode_network
            .entry((a.zipcode.clone(), a.network.clone()))
            .or_insert(0) += 1;
    }
    index
}

/// Zipcode lookup by code.
pub fn zipcode_index(records: &[ZipcodeRecord]) -> HashMap<&str, usize> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.zipcode.as_str(), i))
        .collect()
}
