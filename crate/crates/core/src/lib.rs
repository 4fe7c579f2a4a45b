//! Scoring of ATM network placement from zipcode-level demographics.
//!
//! The pipeline ingests a zipcode feature table and an ATM table, scores each
//! zipcode with a fixed-weight demographic model ([`global_model`]), learns
//! per-county feature weights by clustering zipcodes ([`kmeans`]) and reading
//! feature importances off a random forest trained on the cluster labels
//! ([`forest`]), and fuses both into per-(county, network) scores
//! ([`scoring`]). [`optimizer`] turns county scores into a budgeted
//! placement plan.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod global_model;
pub mod kmeans;
pub mod optimizer;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod wealth;

pub use error::{Error, Result};
