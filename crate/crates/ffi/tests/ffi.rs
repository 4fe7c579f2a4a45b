use std::ffi::{CStr, CString};
use std::ptr;

use atmloc::dataset::{generate_synthetic, SynthConfig};
use atmloc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(atmloc_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn small_dataset(dir: &std::path::Path) -> (CString, CString) {
    let config = SynthConfig { zipcodes: 300, counties: 6, atms: 700, ..SynthConfig::default() };
    generate_synthetic(&config, 9).unwrap().write_to(dir).unwrap();
    (
        cstr(dir.join("zipcodes.csv").to_str().unwrap()),
        cstr(dir.join("atms.csv").to_str().unwrap()),
    )
}

#[test]
fn load_score_and_read_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (z, a) = small_dataset(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(atmloc_dataset_load(z.as_ptr(), a.as_ptr(), ptr::null(), &mut ds), AtmlocStatus::Ok);
        assert_eq!(atmloc_dataset_zipcode_count(ds), 300);
        assert_eq!(atmloc_dataset_atm_count(ds) + atmloc_dataset_rejected_count(ds), 700);
        assert_eq!(atmloc_dataset_county_count(ds), 6);

        let mut config = atmloc_score_config_default();
        assert_eq!(config.alpha, 0.35);
        assert_eq!((config.k, config.top_features, config.trees), (7, 20, 100));
        config.trees = 20;
        let mut report = ptr::null_mut();
        assert_eq!(atmloc_score(ds, &config, &mut report), AtmlocStatus::Ok, "{}", last_error());
        let n = atmloc_report_row_count(report);
        assert!(n >= 6);
        for i in 0..n {
            let mut row = AtmlocScoreRow::default();
            assert_eq!(atmloc_report_row(report, i, &mut row), AtmlocStatus::Ok);
            let expect = 0.65 * row.s_local_norm + 0.35 * row.s_global_norm;
            assert!((row.s_fused - expect).abs() < 1e-12);
            assert!(!atmloc_report_row_county(report, i).is_null());
            assert!(!atmloc_report_row_network(report, i).is_null());
        }
        let mut row = AtmlocScoreRow::default();
        assert_eq!(atmloc_report_row(report, n, &mut row), AtmlocStatus::Validation);
        assert!(atmloc_report_row_county(report, n).is_null());

        let out = dir.path().join("out");
        let out_c = cstr(out.to_str().unwrap());
        assert_eq!(atmloc_report_write(report, out_c.as_ptr()), AtmlocStatus::Ok);
        assert!(out.join("scores.csv").is_file());
        assert!(out.join("report.json").is_file());

        atmloc_report_free(report);
        atmloc_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = cstr("/nonexistent/zipcodes.csv");
        assert_eq!(atmloc_dataset_load(missing.as_ptr(), missing.as_ptr(), ptr::null(), &mut ds), AtmlocStatus::Io);
        assert!(ds.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(
            atmloc_dataset_load(ptr::null(), missing.as_ptr(), ptr::null(), &mut ds),
            AtmlocStatus::NullArgument
        );
        let mut out = 0.0;
        assert_eq!(atmloc_wealth_estimate(1.5, 0.5, 0.5, &mut out), AtmlocStatus::Domain);
        assert_eq!(atmloc_fuse(0.5, 0.5, 1.5, &mut out), AtmlocStatus::Domain);
        assert_eq!(atmloc_score(ptr::null(), ptr::null(), &mut ptr::null_mut()), AtmlocStatus::NullArgument);
        let bad = [0xffu8, 0];
        let mut tag = 0u8;
        assert_eq!(atmloc_classify_address(bad.as_ptr().cast(), &mut tag), AtmlocStatus::InvalidUtf8);
        // success clears the message
        assert_eq!(atmloc_fuse(0.5, 0.5, 0.5, &mut out), AtmlocStatus::Ok);
        assert_eq!(last_error(), "");
        atmloc_dataset_free(ptr::null_mut());
        atmloc_report_free(ptr::null_mut());
        assert_eq!(atmloc_dataset_zipcode_count(ptr::null()), 0);
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(atmloc_wealth_estimate(0.5, 0.8, 0.25, &mut out), AtmlocStatus::Ok);
        assert!((out - 0.3).abs() < 1e-15);
        assert_eq!(atmloc_fuse(1.0, 0.0, 0.35, &mut out), AtmlocStatus::Ok);
        assert!((out - 0.65).abs() < 1e-15);

        let raw = [1.0, 2.0, 3.0];
        let mut w = [0.0; 3];
        assert_eq!(atmloc_softmax(raw.as_ptr(), 3, w.as_mut_ptr()), AtmlocStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] < w[1] && w[1] < w[2]);

        let mut tag = 0u8;
        let mall = cstr("100 Westfield Mall Dr");
        assert_eq!(atmloc_classify_address(mall.as_ptr(), &mut tag), AtmlocStatus::Ok);
        assert_eq!(tag, 10);
        let plain = cstr("12 Elm St");
        assert_eq!(atmloc_classify_address(plain.as_ptr(), &mut tag), AtmlocStatus::Ok);
        assert_eq!(tag, 4);
        assert!(!CStr::from_ptr(atmloc_version()).to_bytes().is_empty());
    }
}

#[test]
fn optimize_exact_and_greedy() {
    let scores = [6.0, 5.0, 5.0];
    let costs = [3.0, 2.0, 2.0];
    unsafe {
        let mut sel = [9u8; 3];
        let (mut s, mut c) = (0.0, 0.0);
        let st = atmloc_optimize(scores.as_ptr(), costs.as_ptr(), 3, 4.0, AtmlocMethod::Exact, sel.as_mut_ptr(), &mut s, &mut c);
        assert_eq!(st, AtmlocStatus::Ok);
        assert_eq!(sel, [0, 1, 1]);
        assert_eq!((s, c), (10.0, 4.0));
        let st = atmloc_optimize(scores.as_ptr(), costs.as_ptr(), 3, 4.0, AtmlocMethod::Greedy, sel.as_mut_ptr(), &mut s, &mut c);
        assert_eq!(st, AtmlocStatus::Ok);
        assert!(s >= 5.0);

        let many = vec![1.0; 30];
        let mut sel = vec![0u8; 30];
        let st = atmloc_optimize(many.as_ptr(), many.as_ptr(), 30, 5.0, AtmlocMethod::Exact, sel.as_mut_ptr(), &mut s, &mut c);
        assert_eq!(st, AtmlocStatus::Capacity);
        let bad_cost = [0.0];
        let st = atmloc_optimize(scores.as_ptr(), bad_cost.as_ptr(), 1, 1.0, AtmlocMethod::Exact, sel.as_mut_ptr(), &mut s, &mut c);
        assert_ne!(st, AtmlocStatus::Ok);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/atmloc.h")).unwrap();
    for name in [
        "atmloc_last_error",
        "atmloc_dataset_load",
        "atmloc_dataset_free",
        "atmloc_score_config_default",
        "atmloc_score",
        "atmloc_report_row",
        "atmloc_report_write",
        "atmloc_report_free",
        "atmloc_wealth_estimate",
        "atmloc_softmax",
        "atmloc_fuse",
        "atmloc_classify_address",
        "atmloc_optimize",
        "ATMLOC_STATUS_PANIC",
        "typedef struct AtmlocDataset AtmlocDataset",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    // syntax-check with the system C compiler when one is present
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-"])
        .arg(format!("-I{}/include", env!("CARGO_MANIFEST_DIR")))
        .stdin(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(b"#include \"atmloc.h\"\nint main(void){return 0;}\n")?;
            child.wait_with_output()
        })
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
