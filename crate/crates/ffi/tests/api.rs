use std::ffi::{CStr, CString, c_char};
use std::ptr;

use wasserpath_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(wp_last_error_message()) }.to_string_lossy().into_owned()
}

fn model(name: &str, params: &[(&str, f64)]) -> *mut WpModel {
    let name = CString::new(name).unwrap();
    let keys: Vec<CString> = params.iter().map(|(k, _)| CString::new(*k).unwrap()).collect();
    let key_ptrs: Vec<_> = keys.iter().map(|k| k.as_ptr()).collect();
    let values: Vec<f64> = params.iter().map(|p| p.1).collect();
    let mut out = ptr::null_mut();
    let s = unsafe { wp_model_new(name.as_ptr(), key_ptrs.as_ptr(), values.as_ptr(), params.len(), &mut out) };
    assert_eq!(s, WpStatus::Ok, "{}", last_error());
    out
}

fn text(report: *const WpReport, f: unsafe extern "C" fn(*const WpReport, *mut c_char, usize, *mut usize) -> WpStatus) -> String {
    let mut needed = 0usize;
    assert_eq!(unsafe { f(report, ptr::null_mut(), 0, &mut needed) }, WpStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { f(report, buf.as_mut_ptr(), buf.len(), &mut needed) }, WpStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn euler_and_exact_paths_match_the_library() {
    let m = model("ou", &[("kappa", 1.5), ("sigma", 0.4)]);
    let mut euler = vec![0.0; 17];
    let mut exact = vec![0.0; 17];
    unsafe {
        assert_eq!(wp_euler_path(m, 7, 3, 1.0, 16, euler.as_mut_ptr(), euler.len()), WpStatus::Ok);
        assert_eq!(wp_exact_path(m, 7, 3, 1.0, 16, exact.as_mut_ptr(), exact.len()), WpStatus::Ok);
    }
    let params = [("kappa".to_string(), 1.5), ("sigma".to_string(), 0.4)].into_iter().collect();
    let lib = wasserpath::builtin("ou", &params).unwrap();
    let grid = wasserpath::GridSpec::with_default_m(1.0, 16).unwrap();
    let inc = wasserpath::simulate::brownian_increments(7, 3, 1.0, 16, 0).unwrap();
    assert_eq!(euler, wasserpath::simulate::euler_path(&lib, &grid, &inc).unwrap().values);
    assert_eq!(exact, wasserpath::simulate::exact_path(&lib, &grid, &inc).unwrap().values);
    assert!(euler.iter().zip(&exact).skip(1).any(|(a, b)| a != b));

    let mut short = vec![0.0; 16];
    let s = unsafe { wp_euler_path(m, 7, 3, 1.0, 16, short.as_mut_ptr(), short.len()) };
    assert_eq!(s, WpStatus::BufferTooSmall);
    unsafe { wp_model_free(m) };
}

#[test]
fn exact_path_without_closed_form_is_an_error() {
    let m = model("sin_elliptic", &[]);
    let mut out = vec![0.0; 9];
    let s = unsafe { wp_exact_path(m, 1, 0, 1.0, 8, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, WpStatus::InvalidArgument);
    assert!(last_error().contains("exact"));
    unsafe { wp_model_free(m) };
}

#[test]
fn bad_parameter_is_invalid_argument() {
    let name = CString::new("gbm").unwrap();
    let key = CString::new("theta").unwrap();
    let keys = [key.as_ptr()];
    let mut out = ptr::null_mut();
    let s = unsafe { wp_model_new(name.as_ptr(), keys.as_ptr(), [1.0].as_ptr(), 1, &mut out) };
    assert_eq!(s, WpStatus::InvalidArgument);
    assert!(out.is_null());
}

#[test]
fn wasserstein_of_shifted_samples() {
    let a = [0.0, 1.0, 2.0];
    let b = [2.5, 0.5, 1.5];
    let mut w = 0.0;
    assert_eq!(unsafe { wp_wasserstein_1d(a.as_ptr(), 3, b.as_ptr(), 3, 2.0, &mut w) }, WpStatus::Ok);
    assert!((w - 0.5).abs() < 1e-15);
    assert_eq!(unsafe { wp_wasserstein_1d(a.as_ptr(), 3, ptr::null(), 3, 2.0, &mut w) }, WpStatus::NullPointer);
}

#[test]
fn experiment_round_trip() {
    let cfg_text = CString::new("model = bm_drift\ngrid.N = 1\nseed = 5\not.instances = 50\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { wp_config_parse(cfg_text.as_ptr(), &mut cfg) }, WpStatus::Ok);
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { wp_run_experiment(cfg, WpExperiment::OtCheck, 1, &mut report) }, WpStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { wp_report_passed(report) }, 1);
    let json = text(report, wp_report_json);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["experiment"], "ot-check");
    assert!(text(report, wp_report_rows_csv).lines().count() > 1);
    unsafe {
        wp_report_free(report);
        wp_config_free(cfg);
    }
}

#[test]
fn config_errors_surface() {
    let bad = CString::new("grid.N = eight\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { wp_config_parse(bad.as_ptr(), &mut cfg) }, WpStatus::Config);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/wasserpath.h")).unwrap();
    for f in [
        "wp_version", "wp_last_error_message", "wp_model_new", "wp_model_free", "wp_euler_path", "wp_exact_path",
        "wp_wasserstein_1d", "wp_config_parse", "wp_config_free", "wp_run_experiment", "wp_report_json",
        "wp_report_rows_csv", "wp_report_passed", "wp_report_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing");
    }
    if let Ok(st) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/wasserpath.h"))
        .status()
    {
        assert!(st.success(), "header does not compile as C");
    }
}
