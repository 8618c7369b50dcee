//! C ABI over the experiment harness.
//!
//! Handles are opaque heap objects owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a [`CovertLabStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`covert_lab_last_error`]. Strings passed in are NUL-terminated UTF-8.
//! Strings handed out are copied into caller buffers: the call reports the
//! full length (without NUL) and writes at most `cap - 1` bytes plus a NUL.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use covert_lab::harness::config::ExperimentConfig;
use covert_lab::harness::experiments::{experiments, replay, run_experiment};
use covert_lab::harness::report::Report;
use covert_lab::harness::stats::{tv_distance, wilson, Z95};
use covert_lab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovertLabStatus {
    Ok = 0,
    NullPointer = 1,
    Utf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    UnknownExperiment = 5,
    ProtocolFailure = 6,
    Io = 7,
    Panic = 8,
}

/// Parsed experiment configuration.
pub struct CovertLabConfig(ExperimentConfig);

/// Finished experiment report.
pub struct CovertLabReport {
    report: Report,
    jsonl: String,
    table: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CovertLabStatus {
    match e {
        Error::Config(_) => CovertLabStatus::Config,
        Error::UnknownExperiment(_) => CovertLabStatus::UnknownExperiment,
        Error::Io(_) => CovertLabStatus::Io,
        Error::LengthMismatch { .. } | Error::Domain { .. } | Error::Invalid(_) => CovertLabStatus::InvalidArgument,
        _ => CovertLabStatus::ProtocolFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CovertLabStatus>) -> CovertLabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovertLabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside covert-lab".into());
            CovertLabStatus::Panic
        }
    }
}

fn fail(e: Error) -> CovertLabStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> CovertLabStatus {
    set_error("null pointer argument".into());
    CovertLabStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, CovertLabStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        set_error(e.to_string());
        CovertLabStatus::Utf8
    })
}

unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize) -> usize {
    if !buf.is_null() && cap > 0 {
        let n = s.len().min(cap - 1);
        ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    s.len()
}

fn boxed_report(report: Report) -> *mut CovertLabReport {
    Box::into_raw(Box::new(CovertLabReport {
        jsonl: report.to_jsonl(),
        table: report.table(),
        report,
    }))
}

/// Copies the last error message of this thread; returns its full length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, cap))
}

#[no_mangle]
pub extern "C" fn covert_lab_experiment_count() -> usize {
    experiments().len()
}

/// Copies the id of experiment `index`; returns its length, or 0 when out
/// of range.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_experiment_id(index: usize, buf: *mut c_char, cap: usize) -> usize {
    experiments().get(index).map_or(0, |e| copy_out(e.id, buf, cap))
}

/// Acceptance criterion of experiment `index`, or 0 when it has none.
#[no_mangle]
pub extern "C" fn covert_lab_experiment_criterion(index: usize) -> u8 {
    experiments().get(index).and_then(|e| e.criterion).unwrap_or(0)
}

/// Parses a TOML config.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_config_from_toml(toml: *const c_char, out: *mut *mut CovertLabConfig) -> CovertLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = ExperimentConfig::from_toml(str_arg(toml)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(CovertLabConfig(cfg)));
        Ok(())
    })
}

/// Default config of an experiment id with the given seed.
///
/// # Safety
/// `id` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_config_default(
    id: *const c_char,
    seed: u64,
    out: *mut *mut CovertLabConfig,
) -> CovertLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let id = str_arg(id)?;
        if !experiments().iter().any(|e| e.id == id) {
            return Err(fail(Error::UnknownExperiment(id.to_string())));
        }
        *out = Box::into_raw(Box::new(CovertLabConfig(ExperimentConfig::new(id, seed))));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_config_set_seed(cfg: *mut CovertLabConfig, seed: u64) -> CovertLabStatus {
    match cfg.as_mut() {
        Some(c) => {
            c.0.seed = seed;
            CovertLabStatus::Ok
        }
        None => null(),
    }
}

/// Overrides the trial count; 0 restores the experiment default.
///
/// # Safety
/// `cfg` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_config_set_trials(cfg: *mut CovertLabConfig, trials: u64) -> CovertLabStatus {
    match cfg.as_mut() {
        Some(c) => {
            c.0.trials = (trials > 0).then_some(trials);
            CovertLabStatus::Ok
        }
        None => null(),
    }
}

/// # Safety
/// `cfg` must be null or come from this library; it must not be used after.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_config_free(cfg: *mut CovertLabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs one experiment.
///
/// # Safety
/// `cfg` must come from this library; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_run(cfg: *const CovertLabConfig, out: *mut *mut CovertLabReport) -> CovertLabStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = boxed_report(run_experiment(&cfg.0).map_err(fail)?);
        Ok(())
    })
}

/// Re-runs the config echoed by a JSON-lines report; `identical` receives
/// whether the fresh report has the same bytes.
///
/// # Safety
/// `report` must be a NUL-terminated string; `out` and `identical` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_replay(
    report: *const c_char,
    out: *mut *mut CovertLabReport,
    identical: *mut bool,
) -> CovertLabStatus {
    guard(|| {
        if out.is_null() || identical.is_null() {
            return Err(null());
        }
        let (fresh, same) = replay(str_arg(report)?).map_err(fail)?;
        *identical = same;
        *out = boxed_report(fresh);
        Ok(())
    })
}

/// Whether every metric of the report passes; false for null.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_passed(report: *const CovertLabReport) -> bool {
    report.as_ref().is_some_and(|r| r.report.passed())
}

/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_metric_count(report: *const CovertLabReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.metrics.len())
}

/// Value and pass flag of metric `id`.
///
/// # Safety
/// `report` must come from this library, `id` must be NUL-terminated, and
/// `value`/`pass` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_metric(
    report: *const CovertLabReport,
    id: *const c_char,
    value: *mut f64,
    pass: *mut bool,
) -> CovertLabStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(null)?;
        if value.is_null() || pass.is_null() {
            return Err(null());
        }
        let id = str_arg(id)?;
        let m = r.report.metric(id).ok_or_else(|| {
            set_error(format!("no metric {id:?}"));
            CovertLabStatus::InvalidArgument
        })?;
        *value = m.value;
        *pass = m.pass;
        Ok(())
    })
}

/// Copies the JSON-lines report; returns its full length.
///
/// # Safety
/// `report` must be null or come from this library; `buf` must be null or
/// valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_jsonl(report: *const CovertLabReport, buf: *mut c_char, cap: usize) -> usize {
    report.as_ref().map_or(0, |r| copy_out(&r.jsonl, buf, cap))
}

/// Copies the plain-text summary table; returns its full length.
///
/// # Safety
/// As for [`covert_lab_report_jsonl`].
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_table(report: *const CovertLabReport, buf: *mut c_char, cap: usize) -> usize {
    report.as_ref().map_or(0, |r| copy_out(&r.table, buf, cap))
}

/// # Safety
/// `report` must be null or come from this library; it must not be used
/// after.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_report_free(report: *mut CovertLabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Total variation distance of two laws on a common support of `len` atoms.
///
/// # Safety
/// `p` and `q` must be valid for `len` reads; `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_tv_distance(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> CovertLabStatus {
    guard(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            return Err(null());
        }
        let (a, b) = (std::slice::from_raw_parts(p, len), std::slice::from_raw_parts(q, len));
        *out = tv_distance(a, b).map_err(fail)?;
        Ok(())
    })
}

/// 95% Wilson interval of `successes` out of `trials`.
///
/// # Safety
/// `lo` and `hi` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covert_lab_wilson95(successes: u64, trials: u64, lo: *mut f64, hi: *mut f64) -> CovertLabStatus {
    if lo.is_null() || hi.is_null() {
        return null();
    }
    if successes > trials {
        set_error(format!("{successes} successes out of {trials} trials"));
        return CovertLabStatus::InvalidArgument;
    }
    let ci = wilson(successes, trials, Z95);
    *lo = ci.lo;
    *hi = ci.hi;
    CovertLabStatus::Ok
}
