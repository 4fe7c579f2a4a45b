//! Seeded synthetic zipcode/ATM datasets.
//!
//! With planted structure on, every county's zipcodes are drawn around up to
//! eight well-separated centres in a latent (density, income, employment)
//! cube, and ATMs are allocated to zipcodes in proportion to their wealth
//! estimate, so per-zipcode ATM counts are nondecreasing in it.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};

use super::{
    normalize_features, write_atm_rows, write_zipcodes, AtmRow, ZipcodeRecord, FEATURE_COLUMNS,
    MEDIAN_HOUSEHOLD_INCOME, PCT_NOT_EARNING, POPULATION_DENSITY,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Stage, StreamRng};
use crate::wealth;

const CA_COUNTIES: [&str; 58] = [
    "Alameda", "Alpine", "Amador", "Butte", "Calaveras", "Colusa", "Contra Costa", "Del Norte",
    "El Dorado", "Fresno", "Glenn", "Humboldt", "Imperial", "Inyo", "Kern", "Kings", "Lake",
    "Lassen", "Los Angeles", "Madera", "Marin", "Mariposa", "Mendocino", "Merced", "Modoc", "Mono",
    "Monterey", "Napa", "Nevada", "Orange", "Placer", "Plumas", "Riverside", "Sacramento",
    "San Benito", "San Bernardino", "San Diego", "San Francisco", "San Joaquin", "San Luis Obispo",
    "San Mateo", "Santa Barbara", "Santa Clara", "Santa Cruz", "Shasta", "Sierra", "Siskiyou",
    "Solano", "Sonoma", "Stanislaus", "Sutter", "Tehama", "Trinity", "Tulare", "Tuolumne",
    "Ventura", "Yolo", "Yuba",
];

const NETWORKS: [&str; 8] = [
    "Allpoint", "MoneyPass", "CO-OP", "STAR", "PULSE", "Cirrus", "Plus", "SUM",
];

const PLACE_NAMES: [&str; 10] = [
    "Westfield", "Sunrise", "Golden", "Pacific", "Harbor", "Valley", "Mission", "Sierra", "Redwood",
    "Bayview",
];

const STREETS: [&str; 8] = ["Main", "Oak", "Pine", "Maple", "Cedar", "Elm", "Lake", "Hill"];

/// Templates per venue class, in name-tag priority order; `{p}` is a place
/// name and `{n}` a number.
const TEMPLATES: [&[&str]; 7] = [
    &["{p} Mall", "{p} Shopping Center", "{p} Galleria", "{p} Plaza"],
    &["{p} Bank Branch #{n}", "{p} Credit Union", "{p} Savings Bank"],
    &["{p} Cinema", "{p} Stadium", "{p} Fitness Club", "{p} Casino"],
    &["{p} Gas Station", "{p} Car Wash", "{p} Fuel Stop"],
    &["{n} {p} Corporate Tower", "{p} Business Center Suite {n}"],
    &["{p} Market", "{p} Pharmacy", "{p} Liquor Store"],
    &["{n} {s} St", ""],
];

const CLASS_WEIGHTS: [f64; 7] = [0.14, 0.22, 0.08, 0.20, 0.12, 0.16, 0.08];

const MAX_PLANTED_CLUSTERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub zipcodes: usize,
    pub counties: usize,
    pub atms: usize,
    pub planted: bool,
    /// Planted clusters per county (at most 8).
    pub clusters_per_county: usize,
    /// Number of `f_*` noise columns.
    pub extra_features: usize,
    pub networks: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            zipcodes: 5000,
            counties: 40,
            atms: 11229,
            planted: true,
            clusters_per_county: 7,
            extra_features: 12,
            networks: 6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zipcodes == 0 || self.counties == 0 {
            return Err(Error::Config("zipcode and county counts must be positive".into()));
        }
        if self.counties > self.zipcodes {
            return Err(Error::Config(format!(
                "county count {} exceeds zipcode count {}",
                self.counties, self.zipcodes
            )));
        }
        if self.zipcodes > 100_000 {
            return Err(Error::Config("at most 100000 distinct zipcodes".into()));
        }
        if self.clusters_per_county == 0 || self.clusters_per_county > MAX_PLANTED_CLUSTERS {
            return Err(Error::Config(format!(
                "clusters per county must be in 1..={MAX_PLANTED_CLUSTERS}"
            )));
        }
        if self.networks == 0 {
            return Err(Error::Config("at least one network required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub zipcodes: Vec<ZipcodeRecord>,
    pub atms: Vec<AtmRow>,
    /// Wealth estimate per zipcode, in `zipcodes` order.
    pub wealth: Vec<f64>,
    /// Planted cluster of each zipcode within its county (`None` if unplanted).
    pub planted_clusters: Option<Vec<usize>>,
}

impl SyntheticDataset {
    /// Serializes as `(zipcodes.csv, atms.csv)` contents.
    pub fn to_csv(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut z = Vec::new();
        write_zipcodes(&mut z, &self.zipcodes)?;
        let mut a = Vec::new();
        write_atm_rows(&mut a, &self.atms)?;
        Ok((z, a))
    }

    /// Writes `zipcodes.csv` and `atms.csv` into `dir`, returning their paths.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (z, a) = self.to_csv()?;
        let zp = dir.join("zipcodes.csv");
        let ap = dir.join("atms.csv");
        fs::write(&zp, z).map_err(|e| Error::io(&zp, e))?;
        fs::write(&ap, a).map_err(|e| Error::io(&ap, e))?;
        Ok((zp, ap))
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    let r = (x * f).round() / f;
    // avoid "-0"
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn pct(x: f64) -> f64 {
    round_to((100.0 * x).clamp(0.0, 100.0), 2)
}

fn county_name(i: usize) -> String {
    CA_COUNTIES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("County {:03}", i + 1))
}

fn network_name(i: usize) -> String {
    NETWORKS
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Network {:02}", i + 1))
}

/// Latent (density, income, employment) per zipcode plus planted cluster ids.
fn latent_points(
    config: &SynthConfig,
    county_of: &[usize],
    rng: &mut StreamRng,
) -> (Vec<[f64; 3]>, Option<Vec<usize>>) {
    let n = config.zipcodes;
    if !config.planted {
        return ((0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(), None);
    }
    let corners: Vec<[f64; 3]> = (0..8)
        .map(|b| {
            let level = |bit: usize| if b >> bit & 1 == 1 { 0.85 } else { 0.15 };
            [level(0), level(1), level(2)]
        })
        .collect();
    let jitter = Normal::new(0.0, 0.03).expect("valid normal");
    let mut latent = vec![[0.0; 3]; n];
    let mut clusters = vec![0; n];
    let mut start = 0;
    while start < n {
        let county = county_of[start];
        let end = (start..n).find(|&i| county_of[i] != county).unwrap_or(n);
        let size = end - start;
        let k = config.clusters_per_county.min(size);
        let mut chosen = corners.clone();
        chosen.shuffle(rng);
        chosen.truncate(k);
        let mut assignment: Vec<usize> = (0..size).map(|j| j % k).collect();
        assignment.shuffle(rng);
        for (offset, &c) in assignment.iter().enumerate() {
            let centre = chosen[c];
            let mut p = [0.0; 3];
            for (d, v) in p.iter_mut().enumerate() {
                *v = (centre[d] + jitter.sample(rng)).clamp(0.0, 1.0);
            }
            latent[start + offset] = p;
            clusters[start + offset] = c;
        }
        start = end;
    }
    (latent, Some(clusters))
}

/// Largest-remainder apportionment of `total` units by nonnegative weights.
/// Allocation is nondecreasing in weight.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa)
            .then(quotas[b].total_cmp(&quotas[a]))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn address(class: usize, rng: &mut StreamRng) -> String {
    let templates = TEMPLATES[class];
    let t = templates[rng.gen_range(0..templates.len())];
    t.replace("{p}", PLACE_NAMES[rng.gen_range(0..PLACE_NAMES.len())])
        .replace("{s}", STREETS[rng.gen_range(0..STREETS.len())])
        .replace("{n}", &rng.gen_range(1..2000).to_string())
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let n = config.zipcodes;
    let mut rng = stream(seed, Stage::Synthetic, 0);
    let county_of: Vec<usize> = (0..n).map(|i| i * config.counties / n).collect();
    let centres: Vec<(f64, f64)> = (0..config.counties)
        .map(|_| (rng.gen_range(33.0..41.5), rng.gen_range(-123.8..-115.0)))
        .collect();

    let (latent, planted_clusters) = latent_points(config, &county_of, &mut rng);
    let noise = |sd: f64| Normal::new(0.0, sd).expect("valid normal");
    let (n2, n3, n4, n5) = (noise(0.02), noise(0.03), noise(0.04), noise(0.05));
    let unit = noise(1.0);

    let mut zipcodes = Vec::with_capacity(n);
    for i in 0..n {
        let [density, income, employment] = latent[i];
        let not_earning = 0.65 - 0.55 * employment;
        let we = density * income * (1.0 - not_earning);
        let mut f = IndexMap::new();
        let values = [
            round_to(density * 20_000.0, 1),
            round_to(20_000.0 + income * 180_000.0, 0),
            pct(not_earning),
            pct(0.05 + 0.5 * we + n3.sample(&mut rng)),
            pct(0.35 + 0.55 * employment + n2.sample(&mut rng)),
            pct(0.05 + 0.3 * we + n3.sample(&mut rng)),
            round_to((150_000.0 + 1_500_000.0 * we + 50_000.0 * unit.sample(&mut rng)).max(0.0), 0),
            pct(0.1 + 0.4 * we + n4.sample(&mut rng)),
            pct(0.2 + 0.5 * we + n5.sample(&mut rng)),
            pct(1.0 - not_earning + n2.sample(&mut rng)),
            pct(0.3 + 0.2 * we + n5.sample(&mut rng)),
            pct(0.1 + 0.2 * we + n5.sample(&mut rng)),
        ];
        for (name, v) in FEATURE_COLUMNS.iter().zip(values) {
            f.insert(name.to_string(), v);
        }
        for j in 0..config.extra_features {
            f.insert(format!("f_{:02}", j + 1), round_to(unit.sample(&mut rng), 4));
        }
        let (clat, clon) = centres[county_of[i]];
        zipcodes.push(ZipcodeRecord {
            zipcode: format!("{:05}", (90_001 + i) % 100_000),
            county: county_name(county_of[i]),
            latitude: round_to(clat + rng.gen_range(-0.3..0.3), 5),
            longitude: round_to(clon + rng.gen_range(-0.3..0.3), 5),
            features: f,
            nearest_zipcodes: None,
        });
    }

    let wealth = planted_wealth(&zipcodes)?;
    let per_zip = if config.planted {
        apportion(config.atms, &wealth)
    } else {
        let mut counts = vec![0; n];
        for _ in 0..config.atms {
            counts[rng.gen_range(0..n)] += 1;
        }
        counts
    };

    let network_names: Vec<String> = (0..config.networks).map(network_name).collect();
    let network_weights: Vec<WeightedIndex<f64>> = (0..config.counties)
        .map(|_| {
            let w: Vec<f64> = (0..config.networks)
                .map(|_| 0.1 + rng.gen::<f64>().powi(2))
                .collect();
            WeightedIndex::new(w).expect("positive weights")
        })
        .collect();
    let class_mix: Vec<WeightedIndex<f64>> = (0..config.networks)
        .map(|net| {
            let favourite = net % (CLASS_WEIGHTS.len() - 1);
            let w: Vec<f64> = CLASS_WEIGHTS
                .iter()
                .enumerate()
                .map(|(c, &w)| if c == favourite { 3.0 * w } else { w })
                .collect();
            WeightedIndex::new(w).expect("positive weights")
        })
        .collect();
    const SUFFIX: [&str; 5] = ["North", "South", "East", "West", "Central"];

    let mut atms = Vec::with_capacity(config.atms);
    for (i, &count) in per_zip.iter().enumerate() {
        let county = county_of[i];
        for _ in 0..count {
            let net = network_weights[county].sample(&mut rng);
            let class = class_mix[net].sample(&mut rng);
            atms.push(AtmRow {
                network: network_names[net].clone(),
                street_address: address(class, &mut rng),
                city: format!("{} {}", zipcodes[i].county, SUFFIX[i % SUFFIX.len()]),
                zipcode: zipcodes[i].zipcode.clone(),
            });
        }
    }

    Ok(SyntheticDataset {
        zipcodes,
        atms,
        wealth,
        planted_clusters,
    })
}

/// Wealth estimate per zipcode from normalized density and income and the
/// not-earning fraction.
fn planted_wealth(records: &[ZipcodeRecord]) -> Result<Vec<f64>> {
    let table = normalize_features(records)?;
    let pd = table.feature_index(POPULATION_DENSITY).expect("required column");
    let mhi = table.feature_index(MEDIAN_HOUSEHOLD_INCOME).expect("required column");
    records
        .iter()
        .zip(&table.rows)
        .map(|(r, row)| {
            let pne = r.feature(PCT_NOT_EARNING).expect("required column") / 100.0;
            let inputs = wealth::WealthInputs::new(row[pd], row[mhi], pne)?;
            Ok(wealth::wealth_estimate(&inputs))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_atm_rows, read_zipcodes};

    fn small() -> SynthConfig {
        SynthConfig {
            zipcodes: 120,
            counties: 4,
            atms: 900,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic(&small(), 9).unwrap().to_csv().unwrap();
        let b = generate_synthetic(&small(), 9).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(), 10).unwrap().to_csv().unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn every_county_nonempty() {
        let cfg = SynthConfig {
            zipcodes: 10,
            counties: 2,
            atms: 30,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg, 1).unwrap();
        let counties: std::collections::BTreeSet<_> = ds.zipcodes.iter().map(|z| &z.county).collect();
        assert_eq!(counties.len(), 2);
        assert_eq!(ds.atms.len(), 30);
    }

    #[test]
    fn more_counties_than_zipcodes_is_config_error() {
        let cfg = SynthConfig {
            zipcodes: 3,
            counties: 4,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg, 1).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn round_trip_through_csv() {
        let ds = generate_synthetic(&small(), 3).unwrap();
        let (z, a) = ds.to_csv().unwrap();
        assert_eq!(read_zipcodes(z.as_slice()).unwrap(), ds.zipcodes);
        assert_eq!(read_atm_rows(a.as_slice()).unwrap(), ds.atms);
    }

    #[test]
    fn atm_counts_monotone_in_wealth() {
        let ds = generate_synthetic(&small(), 5).unwrap();
        let mut counts = std::collections::HashMap::new();
        for a in &ds.atms {
            *counts.entry(a.zipcode.as_str()).or_insert(0usize) += 1;
        }
        let mut pairs: Vec<(f64, usize)> = ds
            .zipcodes
            .iter()
            .zip(&ds.wealth)
            .map(|(z, &w)| (w, counts.get(z.zipcode.as_str()).copied().unwrap_or(0)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(w[1].1 >= w[0].1, "{:?}", w);
            }
        }
    }

    #[test]
    fn apportion_is_exact_and_monotone() {
        let c = apportion(10, &[0.1, 0.3, 0.6, 0.0]);
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert_eq!(c, vec![1, 3, 6, 0]);
        let c = apportion(7, &[1.0, 1.0, 1.0]);
        assert_eq!(c.iter().sum::<usize>(), 7);
        assert_eq!(apportion(5, &[0.0, 0.0]).iter().sum::<usize>(), 5);
    }
}
