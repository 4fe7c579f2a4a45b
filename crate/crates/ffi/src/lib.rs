//! C ABI over the `atmloc` library.
//!
//! Conventions:
//! - every fallible function returns an [`AtmlocStatus`] and writes results
//!   through out-pointers; on failure the out-pointers are left untouched and
//!   [`atmloc_last_error`] describes the problem;
//! - handles are opaque, created by `*_load` / `atmloc_score` and released
//!   with the matching `*_free` (which accepts null);
//! - strings are NUL-terminated UTF-8; borrowed strings stay valid until the
//!   owning handle is freed.
//!
//! Panics never cross the boundary: they are caught and reported as
//! [`AtmlocStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use atmloc::dataset::{self, AtmRecord, KeywordTable, ZipcodeRecord};
use atmloc::error::Error;
use atmloc::forest::ForestParams;
use atmloc::global_model::{self, default_global_weights};
use atmloc::optimizer::{self, Candidate, Method};
use atmloc::report;
use atmloc::scoring::{self, FusionConfig, ScoreReport, ScoringConfig, ScoringInputs};
use atmloc::wealth;

/// Status codes. Values 1-3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtmlocStatus {
    Ok = 0,
    /// Schema, parse, validation or configuration error.
    Validation = 1,
    Io = 2,
    /// Numeric precondition violated.
    Domain = 3,
    /// Problem too large for the requested method.
    Capacity = 4,
    NullArgument = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// Placement method for [`atmloc_optimize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtmlocMethod {
    Exact = 0,
    Greedy = 1,
}

/// Loaded zipcode and ATM tables.
pub struct AtmlocDataset {
    zipcodes: Vec<ZipcodeRecord>,
    atms: Vec<AtmRecord>,
    rejected: usize,
}

/// Scoring results with C strings cached for row access.
pub struct AtmlocReport {
    report: ScoreReport,
    counties: Vec<CString>,
    networks: Vec<CString>,
}

/// Scoring parameters; obtain defaults from [`atmloc_score_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtmlocScoreConfig {
    /// Global weight in the fused score; the local weight is `1 - alpha`.
    pub alpha: f64,
    pub k: usize,
    pub top_features: usize,
    pub trees: usize,
    pub restarts: usize,
    pub seed: u64,
}

/// One (county, network) row; strings via [`atmloc_report_row_county`] and
/// [`atmloc_report_row_network`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtmlocScoreRow {
    pub s_local: f64,
    pub s_global: f64,
    pub s_local_norm: f64,
    pub s_global_norm: f64,
    pub s_fused: f64,
    /// Nonzero when the local model fell back to the global score.
    pub fallback: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AtmlocStatus {
    match e.root() {
        Error::Io { .. } => AtmlocStatus::Io,
        Error::Domain(_) => AtmlocStatus::Domain,
        Error::Capacity(_) => AtmlocStatus::Capacity,
        _ => AtmlocStatus::Validation,
    }
}

struct Fail(AtmlocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AtmlocStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AtmlocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            AtmlocStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            AtmlocStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AtmlocStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message for the most recent failure on this thread ("" after a success).
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn atmloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn atmloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads `zipcodes.csv` and `atms.csv`. `keywords_path` may be null for the
/// built-in name-tag table.
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_load(
    zipcodes_path: *const c_char,
    atms_path: *const c_char,
    keywords_path: *const c_char,
    out: *mut *mut AtmlocDataset,
) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let zp = str_arg(zipcodes_path, "zipcodes_path")?;
        let ap = str_arg(atms_path, "atms_path")?;
        let keywords = if keywords_path.is_null() {
            KeywordTable::default()
        } else {
            let kp = str_arg(keywords_path, "keywords_path")?;
            let text = std::fs::read_to_string(kp).map_err(|e| Error::io(kp, e))?;
            KeywordTable::parse(&text)?
        };
        let zipcodes = dataset::load_zipcodes(zp)?;
        let (atms, rejected) = dataset::load_atms(ap, &zipcodes, &keywords)?;
        *out = Box::into_raw(Box::new(AtmlocDataset { zipcodes, atms, rejected }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from [`atmloc_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_free(dataset: *mut AtmlocDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Zipcode rows; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_zipcode_count(dataset: *const AtmlocDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.zipcodes.len())
}

/// Accepted ATM rows; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_atm_count(dataset: *const AtmlocDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.atms.len())
}

/// ATM rows skipped because their zipcode is unknown; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_rejected_count(dataset: *const AtmlocDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.rejected)
}

/// Distinct counties; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_dataset_county_count(dataset: *const AtmlocDataset) -> usize {
    dataset.as_ref().map_or(0, |d| {
        let mut c: Vec<&str> = d.zipcodes.iter().map(|z| z.county.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c.len()
    })
}

#[no_mangle]
pub extern "C" fn atmloc_score_config_default() -> AtmlocScoreConfig {
    let s = ScoringConfig::default();
    AtmlocScoreConfig {
        alpha: s.fusion.alpha,
        k: s.fusion.k,
        top_features: s.fusion.top_features,
        trees: s.forest.n_trees,
        restarts: s.restarts,
        seed: 42,
    }
}

impl AtmlocScoreConfig {
    fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            fusion: FusionConfig {
                alpha: self.alpha,
                top_features: self.top_features,
                k: self.k,
            },
            restarts: self.restarts,
            forest: ForestParams {
                n_trees: self.trees,
                ..ForestParams::default()
            },
            ..ScoringConfig::default()
        }
    }
}

/// Scores every (county, network) pair with the built-in global weights.
/// `config` may be null for defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_score(
    dataset: *const AtmlocDataset,
    config: *const AtmlocScoreConfig,
    out: *mut *mut AtmlocReport,
) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let cfg = config.as_ref().copied().unwrap_or_else(|| atmloc_score_config_default());
        let scoring_config = cfg.scoring();
        scoring_config.validate()?;
        let table = dataset::normalize_features(&ds.zipcodes)?;
        let inputs = ScoringInputs::new(table, &ds.atms, &default_global_weights())?;
        let report = scoring::score_all(&inputs, &scoring_config, cfg.seed)?;
        let cstr = |s: &str| CString::new(s).unwrap_or_default();
        let counties = report.rows.iter().map(|r| cstr(&r.county)).collect();
        let networks = report.rows.iter().map(|r| cstr(&r.network)).collect();
        *out = Box::into_raw(Box::new(AtmlocReport { report, counties, networks }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`atmloc_score`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_free(report: *mut AtmlocReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Rows, sorted by county then network; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_row_count(report: *const AtmlocReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.rows.len())
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_row(
    report: *const AtmlocReport,
    index: usize,
    out: *mut AtmlocScoreRow,
) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let row = r.report.rows.get(index).ok_or_else(|| {
            Fail(
                AtmlocStatus::Validation,
                format!("row {index} out of range ({} rows)", r.report.rows.len()),
            )
        })?;
        *out = AtmlocScoreRow {
            s_local: row.s_local,
            s_global: row.s_global,
            s_local_norm: row.s_local_norm,
            s_global_norm: row.s_global_norm,
            s_fused: row.s_fused,
            fallback: row.fallback as u8,
        };
        Ok(())
    })
}

/// County of row `index`, or null when out of range. Owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_row_county(report: *const AtmlocReport, index: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.counties.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Network of row `index`, or null when out of range. Owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_row_network(report: *const AtmlocReport, index: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.networks.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Writes scores, rankings, feature tables and report.json into `out_dir`
/// (created if missing).
///
/// # Safety
/// `report` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn atmloc_report_write(report: *const AtmlocReport, out_dir: *const c_char) -> AtmlocStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let dir = Path::new(str_arg(out_dir, "out_dir")?);
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        report::report_files(&r.report)?.write(dir)?;
        Ok(())
    })
}

/// `pd * mhi * (1 - pne)` for normalized inputs in [0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_wealth_estimate(pd: f64, mhi: f64, pne: f64, out: *mut f64) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = wealth::wealth_estimate(&wealth::WealthInputs::new(pd, mhi, pne)?);
        Ok(())
    })
}

/// Softmax of `n` values into `out` (may alias `raw`).
///
/// # Safety
/// `raw` must hold `n` readable values and `out` `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn atmloc_softmax(raw: *const f64, n: usize, out: *mut f64) -> AtmlocStatus {
    guard(|| {
        let values = slice_arg(raw, n, "raw")?.to_vec();
        let w = global_model::softmax(&values)?;
        slice_out(out, n, "out")?.copy_from_slice(&w);
        Ok(())
    })
}

/// `(1 - alpha) * s_local_norm + alpha * s_global_norm`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_fuse(s_local_norm: f64, s_global_norm: f64, alpha: f64, out: *mut f64) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = scoring::fuse(s_local_norm, s_global_norm, alpha)?;
        Ok(())
    })
}

/// Name-tag relative score (4-10) of a street address under the built-in
/// keyword table.
///
/// # Safety
/// `street_address` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_classify_address(street_address: *const c_char, out: *mut u8) -> AtmlocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = dataset::classify_name_tag(str_arg(street_address, "street_address")?).1;
        Ok(())
    })
}

/// Chooses a subset of `n` candidates maximizing total score within `budget`.
/// `selected[i]` is set to 1 for chosen candidates and 0 otherwise.
///
/// # Safety
/// `scores` and `costs` must hold `n` readable values, `selected` `n`
/// writable bytes; `total_score` and `total_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atmloc_optimize(
    scores: *const f64,
    costs: *const f64,
    n: usize,
    budget: f64,
    method: AtmlocMethod,
    selected: *mut u8,
    total_score: *mut f64,
    total_cost: *mut f64,
) -> AtmlocStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let costs = slice_arg(costs, n, "costs")?;
        let selected = slice_out(selected, n, "selected")?;
        let total_score = out_arg(total_score, "total_score")?;
        let total_cost = out_arg(total_cost, "total_cost")?;
        // zero-padded ids keep lexicographic order equal to index order
        let width = n.to_string().len();
        let candidates = scores
            .iter()
            .zip(costs)
            .enumerate()
            .map(|(i, (&s, &c))| Candidate::new(format!("{i:0width$}"), s, c))
            .collect::<Result<Vec<_>, _>>()?;
        let method = match method {
            AtmlocMethod::Exact => Method::Exact,
            AtmlocMethod::Greedy => Method::Greedy,
        };
        let plan = optimizer::place(&candidates, budget, method)?;
        selected.fill(0);
        for id in &plan.selected {
            let i: usize = id.parse().expect("ids are indices");
            selected[i] = 1;
        }
        *total_score = plan.total_score;
        *total_cost = plan.total_cost;
        Ok(())
    })
}
