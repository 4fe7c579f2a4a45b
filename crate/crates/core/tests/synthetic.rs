use std::collections::{BTreeMap, HashMap};

use atmloc::dataset::{atm_frequency, generate_synthetic, normalize_features, AtmRecord, KeywordTable, SynthConfig};
use atmloc::kmeans::{kmeans_fit, KMeansParams};
use atmloc::wealth::{correlate_features, pearson};

#[test]
fn planted_wealth_drives_atm_counts() {
    let ds = generate_synthetic(&SynthConfig::default(), 42).unwrap();
    let mut counts: HashMap<&str, f64> = HashMap::new();
    for a in &ds.atms {
        *counts.entry(a.zipcode.as_str()).or_default() += 1.0;
    }
    let per_zip: Vec<f64> = ds.zipcodes.iter().map(|z| counts.get(z.zipcode.as_str()).copied().unwrap_or(0.0)).collect();
    let r = pearson(&ds.wealth, &per_zip).unwrap();
    assert!(r > 0.5, "r(WE, ATM count) = {r}");

    let keywords = KeywordTable::default();
    let records: Vec<AtmRecord> = ds.atms.iter().cloned().map(|a| AtmRecord::from_row(a, &keywords)).collect();
    assert_eq!(atm_frequency(&records).grand_total(), 11229);
}

#[test]
fn illustrative_features_correlate_positively() {
    let ds = generate_synthetic(&SynthConfig::default(), 42).unwrap();
    let table = normalize_features(&ds.zipcodes).unwrap();
    let report = correlate_features(&table).unwrap();
    for feature in ["rented_1br_pct", "median_home_value", "transportation_pct", "private_primary_school_pct"] {
        let r = report.r(feature).unwrap();
        assert!(r > 0.0, "{feature}: r = {r}");
    }
}

#[test]
fn planted_clusters_are_recoverable_per_county() {
    let config = SynthConfig { zipcodes: 600, counties: 6, atms: 1200, ..SynthConfig::default() };
    let ds = generate_synthetic(&config, 5).unwrap();
    let planted = ds.planted_clusters.as_ref().expect("planted labels");
    let table = normalize_features(&ds.zipcodes).unwrap();
    let mut by_county: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, z) in ds.zipcodes.iter().enumerate() {
        by_county.entry(z.county.as_str()).or_default().push(i);
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for rows in by_county.values() {
        let mut distinct: Vec<usize> = rows.iter().map(|&i| planted[i]).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let points: Vec<Vec<f64>> = rows.iter().map(|&i| table.rows[i].clone()).collect();
        let params = KMeansParams { k: distinct.len(), ..KMeansParams::default() };
        let model = kmeans_fit(&points, &params, 1).unwrap();
        // pair-counting agreement between planted and recovered partitions
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                let same_planted = planted[rows[a]] == planted[rows[b]];
                let same_found = model.labels[a] == model.labels[b];
                agree += usize::from(same_planted == same_found);
                total += 1;
            }
        }
    }
    let rand_index = agree as f64 / total as f64;
    assert!(rand_index > 0.95, "Rand index {rand_index}");
}
