//! Venue classes for ATM street addresses and their relative scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Keyword table shipped with the crate.
pub const DEFAULT_KEYWORDS: &str = include_str!("../../data/keywords.txt");

/// Venue class of an ATM site, ordered by descending relative score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NameTag {
    ShoppingMalls,
    BanksExchangeCentre,
    RecreationCentre,
    GasStationsCarWash,
    OfficeArea,
    IndividualStore,
    NullData,
}

impl NameTag {
    /// All classes in priority order (highest relative score first).
    pub const ALL: [NameTag; 7] = [
        NameTag::ShoppingMalls,
        NameTag::BanksExchangeCentre,
        NameTag::RecreationCentre,
        NameTag::GasStationsCarWash,
        NameTag::OfficeArea,
        NameTag::IndividualStore,
        NameTag::NullData,
    ];

    /// Relative score of the class, proportional to expected daily visitors.
    pub fn relative_score(self) -> u8 {
        match self {
            NameTag::ShoppingMalls => 10,
            NameTag::BanksExchangeCentre => 9,
            NameTag::RecreationCentre => 8,
            NameTag::GasStationsCarWash => 7,
            NameTag::OfficeArea => 6,
            NameTag::IndividualStore => 5,
            NameTag::NullData => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NameTag::ShoppingMalls => "Shopping Malls",
            NameTag::BanksExchangeCentre => "Banks/Exchange Centre",
            NameTag::RecreationCentre => "Recreation Centre",
            NameTag::GasStationsCarWash => "Gas Stations/Car wash",
            NameTag::OfficeArea => "Office Area",
            NameTag::IndividualStore => "Individual Store",
            NameTag::NullData => "Null Data",
        }
    }

    /// Key used in keyword tables.
    pub fn key(self) -> &'static str {
        match self {
            NameTag::ShoppingMalls => "shopping_malls",
            NameTag::BanksExchangeCentre => "banks_exchange_centre",
            NameTag::RecreationCentre => "recreation_centre",
            NameTag::GasStationsCarWash => "gas_stations_car_wash",
            NameTag::OfficeArea => "office_area",
            NameTag::IndividualStore => "individual_store",
            NameTag::NullData => "null_data",
        }
    }
}

impl fmt::Display for NameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NameTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NameTag::ALL
            .into_iter()
            .find(|t| t.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown name-tag class '{s}'")))
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Keyword lists per class, matched as whole-word sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTable {
    // (class, keywords split into words); classes kept in priority order
    entries: Vec<(NameTag, Vec<Vec<String>>)>,
}

impl KeywordTable {
    /// Parses the `<class> = kw, kw, ...` line format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lists: Vec<(NameTag, Vec<Vec<String>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("keyword table line {}: expected '<class> = <keywords>'", i + 1))
            })?;
            let tag: NameTag = key.trim().parse()?;
            if tag == NameTag::NullData {
                return Err(Error::Config(format!(
                    "keyword table line {}: null_data is the fallback class and takes no keywords",
                    i + 1
                )));
            }
            let keywords: Vec<Vec<String>> = rest
                .split(',')
                .map(words)
                .filter(|w| !w.is_empty())
                .collect();
            match lists.iter_mut().find(|(t, _)| *t == tag) {
                Some((_, existing)) => existing.extend(keywords),
                None => lists.push((tag, keywords)),
            }
        }
        lists.sort_by_key(|(t, _)| *t);
        Ok(KeywordTable { entries: lists })
    }

    /// Classifies an address: first class in priority order with a matching keyword.
    pub fn classify(&self, street_address: &str) -> NameTag {
        let tokens = words(street_address);
        if tokens.is_empty() {
            return NameTag::NullData;
        }
        for (tag, keywords) in &self.entries {
            let hit = keywords
                .iter()
                .any(|kw| tokens.windows(kw.len()).any(|w| w == kw.as_slice()));
            if hit {
                return *tag;
            }
        }
        NameTag::NullData
    }
}

impl Default for KeywordTable {
    fn default() -> Self {
        KeywordTable::parse(DEFAULT_KEYWORDS).expect("bundled keyword table parses")
    }
}

/// Classifies with the bundled keyword table.
pub fn classify_name_tag(street_address: &str) -> (NameTag, u8) {
    thread_local! {
        static TABLE: KeywordTable = KeywordTable::default();
    }
    let tag = TABLE.with(|t| t.classify(street_address));
    (tag, tag.relative_score())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relative_scores_match_table() {
        let scores: Vec<u8> = NameTag::ALL.iter().map(|t| t.relative_score()).collect();
        assert_eq!(scores, vec![10, 9, 8, 7, 6, 5, 4]);
    }

    #[test]
    fn classifies_examples() {
        assert_eq!(classify_name_tag("Chase Bank Branch #114"), (NameTag::BanksExchangeCentre, 9));
        assert_eq!(
            classify_name_tag("Shell Gas Station & Car Wash"),
            (NameTag::GasStationsCarWash, 7)
        );
        assert_eq!(classify_name_tag(""), (NameTag::NullData, 4));
        assert_eq!(classify_name_tag("Westfield Mall"), (NameTag::ShoppingMalls, 10));
        assert_eq!(classify_name_tag("1200 Main St"), (NameTag::NullData, 4));
    }

    #[test]
    fn higher_class_wins_and_matching_is_case_insensitive() {
        assert_eq!(classify_name_tag("BANK inside the MALL").0, NameTag::ShoppingMalls);
        assert_eq!(classify_name_tag("Las Vegas Blvd").0, NameTag::NullData);
        assert_eq!(classify_name_tag("24 Hour Fitness").0, NameTag::RecreationCentre);
    }

    #[test]
    fn custom_table_overrides_default() {
        let table = KeywordTable::parse("office_area = depot\n# comment\n").unwrap();
        assert_eq!(table.classify("Depot 9"), NameTag::OfficeArea);
        assert_eq!(table.classify("Westfield Mall"), NameTag::NullData);
        assert!(KeywordTable::parse("null_data = x").is_err());
        assert!(KeywordTable::parse("nonsense = x").is_err());
        assert!(KeywordTable::parse("no equals sign").is_err());
    }

    proptest! {
        #[test]
        fn classification_is_total(addr in ".{0,40}") {
            let (tag, score) = classify_name_tag(&addr);
            prop_assert_eq!(score, tag.relative_score());
        }
    }
}
