//! C ABI for the adiaband experiment runner: opaque handles, integer error
//! codes, and a thread-local last-error message. The header is generated by
//! cbindgen at build time (see `include/adiaband.h`).

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_int, c_uint};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adiaband::config::RunConfig;
use adiaband::models::degennes;
use adiaband::report::{read_run, Report};
use adiaband::runner::run_to_dir;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdiabandStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration failed to parse or validate.
    ConfigError = 3,
    /// The computation failed (solver, model precondition, or I/O).
    RuntimeError = 4,
    /// The run completed but at least one check failed.
    AssertionFailure = 5,
    /// The provided buffer was too small.
    BufferTooSmall = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Opaque parsed run configuration.
pub struct AdiabandConfig {
    inner: RunConfig,
}

/// Opaque completed run report.
pub struct AdiabandReport {
    inner: Report,
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, AdiabandStatus> {
    if ptr.is_null() {
        return Err(AdiabandStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("invalid UTF-8: {e}"));
        AdiabandStatus::InvalidUtf8
    })
}

fn guard<F: FnOnce() -> AdiabandStatus>(f: F) -> AdiabandStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            AdiabandStatus::Panic
        }
    }
}

fn write_buffer(text: &str, buf: *mut c_char, len: usize) -> AdiabandStatus {
    if buf.is_null() {
        return AdiabandStatus::NullArgument;
    }
    let bytes = text.as_bytes();
    if bytes.len() + 1 > len {
        set_error(format!("buffer of {len} bytes, need {}", bytes.len() + 1));
        return AdiabandStatus::BufferTooSmall;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    AdiabandStatus::Ok
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length in
/// bytes, excluding the terminator.
#[no_mangle]
pub extern "C" fn adiaband_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Parses and validates a JSON run configuration (schema v1). On success
/// `*out` owns a new handle that must be released with
/// `adiaband_config_free`.
#[no_mangle]
pub unsafe extern "C" fn adiaband_config_parse(
    json: *const c_char,
    out: *mut *mut AdiabandConfig,
) -> AdiabandStatus {
    guard(|| {
        if out.is_null() {
            return AdiabandStatus::NullArgument;
        }
        let text = match cstr(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match RunConfig::from_json(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(AdiabandConfig { inner: cfg }));
                AdiabandStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                AdiabandStatus::ConfigError
            }
        }
    })
}

/// Releases a configuration handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adiaband_config_free(cfg: *mut AdiabandConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Writes the 16-hex-digit configuration hash into `buf` (needs >= 17 bytes).
#[no_mangle]
pub unsafe extern "C" fn adiaband_config_hash(
    cfg: *const AdiabandConfig,
    buf: *mut c_char,
    len: usize,
) -> AdiabandStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return AdiabandStatus::NullArgument;
        };
        write_buffer(&cfg.inner.hash(), buf, len)
    })
}

/// Runs the configured experiment, writing report.json and CSV tables into
/// `out_dir`. On success (including failed checks) `*out` owns a report
/// handle. Returns `AssertionFailure` when the run completed but a check
/// failed.
#[no_mangle]
pub unsafe extern "C" fn adiaband_run(
    cfg: *const AdiabandConfig,
    out_dir: *const c_char,
    out: *mut *mut AdiabandReport,
) -> AdiabandStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return AdiabandStatus::NullArgument;
        };
        if out.is_null() {
            return AdiabandStatus::NullArgument;
        }
        let dir = match cstr(out_dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match run_to_dir(&cfg.inner, Path::new(dir)) {
            Ok(report) => {
                let passed = report.passed();
                *out = Box::into_raw(Box::new(AdiabandReport { inner: report }));
                if passed {
                    AdiabandStatus::Ok
                } else {
                    set_error("one or more checks failed; see failures.json".into());
                    AdiabandStatus::AssertionFailure
                }
            }
            Err(e) => {
                set_error(e.to_string());
                AdiabandStatus::RuntimeError
            }
        }
    })
}

/// Loads a completed run directory into a report handle.
#[no_mangle]
pub unsafe extern "C" fn adiaband_report_load(
    dir: *const c_char,
    out: *mut *mut AdiabandReport,
) -> AdiabandStatus {
    guard(|| {
        if out.is_null() {
            return AdiabandStatus::NullArgument;
        }
        let dir = match cstr(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match read_run(Path::new(dir)) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(AdiabandReport { inner: report }));
                AdiabandStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                AdiabandStatus::RuntimeError
            }
        }
    })
}

/// Releases a report handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adiaband_report_free(report: *mut AdiabandReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// 1 if every check in the report passed, 0 otherwise (or on null).
#[no_mangle]
pub unsafe extern "C" fn adiaband_report_passed(report: *const AdiabandReport) -> c_int {
    report.as_ref().map_or(0, |r| r.inner.passed() as c_int)
}

/// Serializes the report as JSON. The returned string must be released with
/// `adiaband_string_free`; returns null on error.
#[no_mangle]
pub unsafe extern "C" fn adiaband_report_to_json(
    report: *const AdiabandReport,
) -> *mut c_char {
    let Some(report) = report.as_ref() else {
        return std::ptr::null_mut();
    };
    match serde_json::to_string_pretty(&report.inner) {
        Ok(json) => CString::new(json).map_or(std::ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adiaband_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// n-th eigenvalue curve of the half-line model -d^2/dt^2 + (t - sigma)^2
/// with Robin condition u'(0) = gamma u(0) (pass INFINITY for Dirichlet),
/// refined to the continuum limit. `n` is 1-based.
#[no_mangle]
pub unsafe extern "C" fn adiaband_degennes_mu(
    gamma: c_double,
    sigma: c_double,
    n: c_uint,
    out: *mut c_double,
) -> AdiabandStatus {
    guard(|| {
        if out.is_null() || n == 0 {
            return AdiabandStatus::NullArgument;
        }
        match degennes::mu(gamma, sigma, n as usize) {
            Ok(v) => {
                *out = v;
                AdiabandStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                AdiabandStatus::RuntimeError
            }
        }
    })
}

/// Minimum of the n-th dispersion curve over sigma: location and value.
#[no_mangle]
pub unsafe extern "C" fn adiaband_degennes_dispersion_minimum(
    gamma: c_double,
    n: c_uint,
    sigma_out: *mut c_double,
    mu_out: *mut c_double,
) -> AdiabandStatus {
    guard(|| {
        if sigma_out.is_null() || mu_out.is_null() || n == 0 {
            return AdiabandStatus::NullArgument;
        }
        match degennes::dispersion_minimum(gamma, n as usize) {
            Ok((theta, sigma)) => {
                *sigma_out = sigma;
                *mu_out = theta;
                AdiabandStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                AdiabandStatus::RuntimeError
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn parse_run_and_report_lifecycle() {
        let json = c(r#"{
            "schema_version": 1,
            "seed": 3,
            "experiment": "degennes",
            "gammas": [0.0],
            "n_max": 1,
            "windows": []
        }"#);
        let mut cfg: *mut AdiabandConfig = std::ptr::null_mut();
        unsafe {
            assert_eq!(adiaband_config_parse(json.as_ptr(), &mut cfg), AdiabandStatus::Ok);
            let mut hash = [0 as c_char; 17];
            assert_eq!(
                adiaband_config_hash(cfg, hash.as_mut_ptr(), hash.len()),
                AdiabandStatus::Ok
            );
            assert_eq!(CStr::from_ptr(hash.as_ptr()).to_bytes().len(), 16);

            let dir = std::env::temp_dir().join(format!("adiaband-ffi-{}", std::process::id()));
            let dir_c = c(dir.to_str().unwrap());
            let mut report: *mut AdiabandReport = std::ptr::null_mut();
            assert_eq!(
                adiaband_run(cfg, dir_c.as_ptr(), &mut report),
                AdiabandStatus::Ok
            );
            assert_eq!(adiaband_report_passed(report), 1);
            let json_out = adiaband_report_to_json(report);
            assert!(!json_out.is_null());
            let text = CStr::from_ptr(json_out).to_str().unwrap().to_string();
            assert!(text.contains("\"experiment\": \"degennes\""));
            adiaband_string_free(json_out);
            adiaband_report_free(report);

            let mut loaded: *mut AdiabandReport = std::ptr::null_mut();
            assert_eq!(
                adiaband_report_load(dir_c.as_ptr(), &mut loaded),
                AdiabandStatus::Ok
            );
            assert_eq!(adiaband_report_passed(loaded), 1);
            adiaband_report_free(loaded);
            adiaband_config_free(cfg);
            std::fs::remove_dir_all(&dir).unwrap();
        }
    }

    #[test]
    fn bad_config_reports_error_message() {
        let json = c(r#"{"schema_version": 9, "experiment": "degennes",
            "gammas": [0.0], "n_max": 1, "windows": []}"#);
        let mut cfg: *mut AdiabandConfig = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                adiaband_config_parse(json.as_ptr(), &mut cfg),
                AdiabandStatus::ConfigError
            );
        }
        let mut buf = [0 as c_char; 256];
        let n = adiaband_last_error(buf.as_mut_ptr(), buf.len());
        assert!(n > 0);
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert!(msg.contains("schema"), "message: {msg}");
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut cfg: *mut AdiabandConfig = std::ptr::null_mut();
            assert_eq!(
                adiaband_config_parse(std::ptr::null(), &mut cfg),
                AdiabandStatus::NullArgument
            );
            assert_eq!(adiaband_report_passed(std::ptr::null()), 0);
            adiaband_config_free(std::ptr::null_mut());
            adiaband_report_free(std::ptr::null_mut());
            adiaband_string_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn degennes_anchor_through_the_c_surface() {
        let mut v = 0.0;
        unsafe {
            assert_eq!(
                adiaband_degennes_mu(0.0, 0.0, 1, &mut v),
                AdiabandStatus::Ok
            );
        }
        assert!((v - 1.0).abs() < 1e-6, "mu = {v}");
        let (mut s, mut m) = (0.0, 0.0);
        unsafe {
            assert_eq!(
                adiaband_degennes_dispersion_minimum(0.0, 1, &mut s, &mut m),
                AdiabandStatus::Ok
            );
        }
        assert!((m - 0.590106).abs() < 1e-3, "theta = {m}");
    }
}
