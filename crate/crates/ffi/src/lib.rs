//! C ABI over `wasserpath`.
//!
//! Every function returns a [`WpStatus`]; on failure the message is available
//! from [`wp_last_error_message`] on the same thread. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;

use wasserpath::experiments::{
    ExperimentConfig, run_lookback_bias, run_marginal_rate, run_ot_check, run_pathwise_rate, run_strong_rate,
    run_verify, with_workers,
};
use wasserpath::simulate::{GridSpec, brownian_increments, euler_path, exact_path};
use wasserpath::{DiffusionModel, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpStatus {
    Ok = 0,
    InvalidArgument = 1,
    UnknownModel = 2,
    DomainExit = 3,
    Numerical = 4,
    SizeOverflow = 5,
    Config = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
    /// The caller's buffer is shorter than the value; the needed length was written.
    BufferTooSmall = 10,
}

/// Experiment selector for [`wp_run_experiment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpExperiment {
    StrongRate = 0,
    MarginalRate = 1,
    PathwiseRate = 2,
    LookbackBias = 3,
    Verify = 4,
    OtCheck = 5,
}

/// Opaque diffusion model.
pub struct WpModel(DiffusionModel);

/// Opaque parsed experiment configuration.
pub struct WpConfig(ExperimentConfig);

/// Opaque experiment result: `report.json` and `rows.csv` contents.
pub struct WpReport {
    json: String,
    rows_csv: String,
    passed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WpStatus {
    match e {
        Error::InvalidArgument(_) => WpStatus::InvalidArgument,
        Error::UnknownModel(_) => WpStatus::UnknownModel,
        Error::DomainExit { .. } => WpStatus::DomainExit,
        Error::Numerical(_) => WpStatus::Numerical,
        Error::SizeOverflow(_) => WpStatus::SizeOverflow,
        Error::Config(_) => WpStatus::Config,
        Error::Io(_) => WpStatus::Io,
    }
}

struct Fail(WpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(WpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WpStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            WpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(WpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

/// Library version, e.g. `v0.1.0`. Static storage.
#[no_mangle]
pub extern "C" fn wp_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!("v", env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"",
    };
    V.as_ptr()
}

/// Message of the last failed call on this thread (empty after a success).
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn wp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a builtin model from `n` parameter name/value pairs.
///
/// # Safety
/// `name` must be a NUL-terminated string; `keys` and `values` must hold `n`
/// entries (may be null when `n == 0`); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_model_new(
    name: *const c_char,
    keys: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut *mut WpModel,
) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = unsafe { str_arg(name, "name") }?;
        let keys = unsafe { slice_arg(keys, n, "keys") }?;
        let values = unsafe { slice_arg(values, n, "values") }?;
        let mut params = BTreeMap::new();
        for (&k, &v) in keys.iter().zip(values) {
            params.insert(unsafe { str_arg(k, "parameter name") }?.to_string(), v);
        }
        let m = wasserpath::builtin(name, &params)?;
        unsafe { *out = Box::into_raw(Box::new(WpModel(m))) };
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`wp_model_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wp_model_free(model: *mut WpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

unsafe fn path_into(
    model: *const WpModel,
    seed: u64,
    path_index: u64,
    horizon: f64,
    steps: usize,
    out: *mut f64,
    out_len: usize,
    exact: bool,
) -> WpStatus {
    guard(|| {
        let model = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < steps.saturating_add(1) {
            return Err(Fail(WpStatus::BufferTooSmall, format!("need {} values", steps.saturating_add(1))));
        }
        let grid = GridSpec::with_default_m(horizon, steps)?;
        let inc = brownian_increments(seed, path_index, horizon, steps, 0)?;
        let path = if exact { exact_path(&model.0, &grid, &inc)? } else { euler_path(&model.0, &grid, &inc)? };
        unsafe { std::slice::from_raw_parts_mut(out, path.values.len()) }.copy_from_slice(&path.values);
        Ok(())
    })
}

/// Euler values at `t_k = k·T/N`, `k = 0..=N`, for Brownian path `path_index`
/// of `seed`. `out` must hold at least `steps + 1` doubles.
///
/// # Safety
/// `model` must be a live handle and `out` writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wp_euler_path(
    model: *const WpModel,
    seed: u64,
    path_index: u64,
    horizon: f64,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> WpStatus {
    unsafe { path_into(model, seed, path_index, horizon, steps, out, out_len, false) }
}

/// Exact diffusion values on the same grid and Brownian path as
/// [`wp_euler_path`]; fails for models without a closed-form law.
///
/// # Safety
/// As for [`wp_euler_path`].
#[no_mangle]
pub unsafe extern "C" fn wp_exact_path(
    model: *const WpModel,
    seed: u64,
    path_index: u64,
    horizon: f64,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> WpStatus {
    unsafe { path_into(model, seed, path_index, horizon, steps, out, out_len, true) }
}

/// `W_p` between the empirical measures of two samples of equal size.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_wasserstein_1d(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    p: f64,
    out: *mut f64,
) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = unsafe { slice_arg(a, na, "a") }?;
        let b = unsafe { slice_arg(b, nb, "b") }?;
        let w = wasserpath::coupling::empirical_w1d(a, b, p)?;
        unsafe { *out = w };
        Ok(())
    })
}

/// Parses configuration text (the same `key = value` format as the CLI).
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_config_parse(text: *const c_char, out: *mut *mut WpConfig) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = unsafe { str_arg(text, "text") }?;
        let cfg = ExperimentConfig::parse(text, None)?;
        unsafe { *out = Box::into_raw(Box::new(WpConfig(cfg))) };
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`wp_config_parse`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wp_config_free(config: *mut WpConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Runs an experiment with `workers` threads (0: all cores). Nothing is
/// written to disk.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_run_experiment(
    config: *const WpConfig,
    kind: WpExperiment,
    workers: usize,
    out: *mut *mut WpReport,
) -> WpStatus {
    guard(|| {
        let cfg = &unsafe { config.as_ref() }.ok_or_else(|| null("config"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let workers = (workers > 0).then_some(workers);
        let report = with_workers(workers, || -> wasserpath::Result<WpReport> {
            let rate = |r: wasserpath::experiments::RateReport| WpReport { json: r.to_json(), rows_csv: r.rows_csv(), passed: true };
            let suite = |r: wasserpath::experiments::SuiteReport| WpReport { json: r.to_json(), rows_csv: r.rows_csv(), passed: r.passed };
            Ok(match kind {
                WpExperiment::StrongRate => rate(run_strong_rate(cfg)?),
                WpExperiment::MarginalRate => rate(run_marginal_rate(cfg, None)?),
                WpExperiment::PathwiseRate => rate(run_pathwise_rate(cfg)?.report),
                WpExperiment::LookbackBias => rate(run_lookback_bias(cfg)?),
                WpExperiment::Verify => suite(run_verify(cfg)?),
                WpExperiment::OtCheck => suite(run_ot_check(cfg)?),
            })
        })??;
        unsafe { *out = Box::into_raw(Box::new(report)) };
        Ok(())
    })
}

unsafe fn copy_text(text: &str, buf: *mut c_char, buf_len: usize, needed: *mut usize) -> Result<(), Fail> {
    let n = text.len() + 1;
    if !needed.is_null() {
        unsafe { *needed = n };
    }
    if buf.is_null() || buf_len < n {
        return Err(Fail(WpStatus::BufferTooSmall, format!("need {n} bytes")));
    }
    unsafe {
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
    }
    Ok(())
}

/// Copies the report JSON (NUL-terminated) into `buf`. `needed` receives the
/// size including the NUL; pass a null `buf` to query it.
///
/// # Safety
/// `report` must be live; `buf` writable for `buf_len` bytes; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wp_report_json(
    report: *const WpReport,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> WpStatus {
    guard(|| {
        let r = unsafe { report.as_ref() }.ok_or_else(|| null("report"))?;
        unsafe { copy_text(&r.json, buf, buf_len, needed) }
    })
}

/// Copies the per-row CSV; same buffer protocol as [`wp_report_json`].
///
/// # Safety
/// As for [`wp_report_json`].
#[no_mangle]
pub unsafe extern "C" fn wp_report_rows_csv(
    report: *const WpReport,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> WpStatus {
    guard(|| {
        let r = unsafe { report.as_ref() }.ok_or_else(|| null("report"))?;
        unsafe { copy_text(&r.rows_csv, buf, buf_len, needed) }
    })
}

/// 1 when every check passed (always 1 for rate sweeps), 0 otherwise or for null.
///
/// # Safety
/// `report` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn wp_report_passed(report: *const WpReport) -> i32 {
    unsafe { report.as_ref() }.map_or(0, |r| r.passed as i32)
}

/// # Safety
/// `report` must come from [`wp_run_experiment`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wp_report_free(report: *mut WpReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}
