//! C ABI for the replenish engine.
//!
//! Conventions: functions return an [`RpStatus`] code; `RP_STATUS_OK` means
//! the out-parameters were written. Configurations are opaque handles
//! created by `rp_config_parse` and released with `rp_config_free`. Strings
//! returned through `char**` out-parameters are allocated by this library
//! and must be released with `rp_string_free`. On failure,
//! `rp_last_error_message` returns a thread-local description of the most
//! recent error.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use replenish::analysis::{
    binomial_tail_bound, birth_death_stationary_closed_form, epoch_lower_bound, renewal_identity,
    EpochCase,
};
use replenish::config::ExperimentConfig;
use replenish::eg::{solve_fluid_eg, EgInstance};
use replenish::harness::{run_replication, run_sweep, sweep_to_csv};
use replenish::verify::run_verification;

/// Result codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    /// A pointer argument was null.
    NullPointer = 1,
    /// Input text was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration or instance failed to parse or validate.
    InvalidConfig = 3,
    /// A numeric argument was outside its documented domain.
    InvalidArgument = 4,
    /// The simulation or solver failed; see `rp_last_error_message`.
    RunFailed = 5,
    /// A callee panicked; state is still consistent but the call did nothing.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Opaque experiment configuration.
pub struct RpConfig {
    inner: ExperimentConfig,
}

fn guard<F: FnOnce() -> RpStatus>(f: F) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            RpStatus::Panic
        }
    }
}

unsafe fn read_utf8<'a>(text: *const c_char) -> Result<&'a str, RpStatus> {
    if text.is_null() {
        set_error("null string argument");
        return Err(RpStatus::NullPointer);
    }
    CStr::from_ptr(text).to_str().map_err(|_| {
        set_error("string argument was not valid UTF-8");
        RpStatus::InvalidUtf8
    })
}

fn write_string(out: *mut *mut c_char, text: String) -> RpStatus {
    let sanitized = text.replace('\0', " ");
    match CString::new(sanitized) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            RpStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL");
            RpStatus::RunFailed
        }
    }
}

/// Parse and validate an experiment configuration from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_config_parse(
    json: *const c_char,
    out: *mut *mut RpConfig,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out-pointer");
            return RpStatus::NullPointer;
        }
        let text = match read_utf8(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match ExperimentConfig::from_json(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(RpConfig { inner: config }));
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::InvalidConfig
            }
        }
    })
}

/// Release a configuration handle. Null is a no-op.
///
/// # Safety
/// `config` must have come from `rp_config_parse` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn rp_config_free(config: *mut RpConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Flat summary of one replication.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpRunSummary {
    pub horizon: u64,
    pub w_bar: f64,
    pub v_bar: f64,
    pub delta_eff: f64,
    pub delta_fair: f64,
    pub h_m: f64,
    pub h_0: f64,
    pub clamp_warnings: u64,
}

/// Run one replication of the cell `(m, delta)`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_run_replication(
    config: *const RpConfig,
    m: f64,
    delta: f64,
    replication: u64,
    out: *mut RpRunSummary,
) -> RpStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RpStatus::NullPointer;
        }
        let config = &(*config).inner;
        match run_replication(config, m, delta, replication) {
            Ok(summary) => {
                *out = RpRunSummary {
                    horizon: summary.horizon,
                    w_bar: summary.w_bar,
                    v_bar: summary.v_bar,
                    delta_eff: summary.delta_eff,
                    delta_fair: summary.delta_fair,
                    h_m: summary.h_m,
                    h_0: summary.h_0,
                    clamp_warnings: summary.clamp_warnings,
                };
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::RunFailed
            }
        }
    })
}

/// Run the configured grid sweep and return the result as CSV text.
///
/// # Safety
/// `config` must be a live handle and `out_csv` a valid pointer; free the
/// returned string with `rp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rp_sweep_csv(
    config: *const RpConfig,
    out_csv: *mut *mut c_char,
) -> RpStatus {
    guard(|| {
        if config.is_null() || out_csv.is_null() {
            set_error("null pointer argument");
            return RpStatus::NullPointer;
        }
        match run_sweep(&(*config).inner) {
            Ok(result) => write_string(out_csv, sweep_to_csv(&result)),
            Err(err) => {
                set_error(err.to_string());
                RpStatus::RunFailed
            }
        }
    })
}

/// Release a string allocated by this library. Null is a no-op.
///
/// # Safety
/// `text` must have been returned through one of this library's `char**`
/// out-parameters.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// Closed-form stationary distribution of the center-reverting birth-death
/// chain. `pi_out` must hold `m + 1` doubles.
///
/// # Safety
/// `pi_out` must point to at least `m + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_birth_death_stationary(
    p: f64,
    delta: f64,
    m: usize,
    pi_out: *mut f64,
) -> RpStatus {
    guard(|| {
        if pi_out.is_null() {
            set_error("null output buffer");
            return RpStatus::NullPointer;
        }
        match birth_death_stationary_closed_form(p, delta, m) {
            Ok(pi) => {
                ptr::copy_nonoverlapping(pi.as_ptr(), pi_out, pi.len());
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::InvalidArgument
            }
        }
    })
}

/// Long-run boundary occupancy from hitting statistics.
///
/// # Safety
/// `h_m_out` and `h_0_out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rp_renewal_identity(
    e_m: f64,
    e_0: f64,
    p_m: f64,
    p_0: f64,
    h_m_out: *mut f64,
    h_0_out: *mut f64,
) -> RpStatus {
    guard(|| {
        if h_m_out.is_null() || h_0_out.is_null() {
            set_error("null output pointer");
            return RpStatus::NullPointer;
        }
        match renewal_identity(e_m, e_0, p_m, p_0) {
            Ok((h_m, h_0)) => {
                *h_m_out = h_m;
                *h_0_out = h_0;
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::InvalidArgument
            }
        }
    })
}

/// Exact binomial tail `P(Bin(l, 1/2) >= l/2 + t)` with its lower bound.
///
/// # Safety
/// The three output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_binomial_tail_bound(
    l: u64,
    t: u64,
    exact_out: *mut f64,
    bound_out: *mut f64,
    holds_out: *mut bool,
) -> RpStatus {
    guard(|| {
        if exact_out.is_null() || bound_out.is_null() || holds_out.is_null() {
            set_error("null output pointer");
            return RpStatus::NullPointer;
        }
        match binomial_tail_bound(l, t) {
            Ok(checked) => {
                *exact_out = checked.exact;
                *bound_out = checked.bound;
                *holds_out = checked.holds;
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::InvalidArgument
            }
        }
    })
}

/// Case selector written by `rp_epoch_lower_bound`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpEpochCase {
    UnderAllocation = 0,
    OverAllocation = 1,
    Straddling = 2,
}

/// Epoch lower bound on overflow/stockout for allocation band
/// `[alloc, alloc + delta]` under coin-flip supply and unit demand.
///
/// # Safety
/// All four output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_epoch_lower_bound(
    alloc: f64,
    delta: f64,
    capacity: f64,
    w_lb_out: *mut f64,
    v_lb_out: *mut f64,
    epoch_len_out: *mut u64,
    case_out: *mut RpEpochCase,
) -> RpStatus {
    guard(|| {
        if w_lb_out.is_null() || v_lb_out.is_null() || epoch_len_out.is_null() || case_out.is_null()
        {
            set_error("null output pointer");
            return RpStatus::NullPointer;
        }
        match epoch_lower_bound(alloc, delta, capacity) {
            Ok(bound) => {
                *w_lb_out = bound.w_lb;
                *v_lb_out = bound.v_lb;
                *epoch_len_out = bound.epoch_len;
                *case_out = match bound.case {
                    EpochCase::UnderAllocation => RpEpochCase::UnderAllocation,
                    EpochCase::OverAllocation => RpEpochCase::OverAllocation,
                    EpochCase::Straddling => RpEpochCase::Straddling,
                };
                RpStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                RpStatus::InvalidArgument
            }
        }
    })
}

/// Solve a fluid Eisenberg-Gale instance given as JSON
/// (`{"weights": [[...]], "type_means": [...], "supply_means": [...]}`);
/// returns the solution as JSON.
///
/// # Safety
/// `instance_json` must be NUL-terminated; free the output with
/// `rp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rp_eg_solve_json(
    instance_json: *const c_char,
    tolerance: f64,
    out_json: *mut *mut c_char,
) -> RpStatus {
    guard(|| {
        if out_json.is_null() {
            set_error("null out-pointer");
            return RpStatus::NullPointer;
        }
        let text = match read_utf8(instance_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let instance: EgInstance = match serde_json::from_str(text) {
            Ok(inst) => inst,
            Err(err) => {
                set_error(err.to_string());
                return RpStatus::InvalidConfig;
            }
        };
        if let Err(err) = instance.validate() {
            set_error(err.to_string());
            return RpStatus::InvalidConfig;
        }
        match solve_fluid_eg(&instance, tolerance) {
            Ok(solution) => match serde_json::to_string_pretty(&solution) {
                Ok(json) => write_string(out_json, json),
                Err(err) => {
                    set_error(err.to_string());
                    RpStatus::RunFailed
                }
            },
            Err(err) => {
                set_error(err.to_string());
                RpStatus::RunFailed
            }
        }
    })
}

/// Run the numerical verification suite; returns the JSON report and writes
/// whether every check passed.
///
/// # Safety
/// `passed_out` and `out_json` must be valid pointers; free the output with
/// `rp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rp_verify_json(
    seed: u64,
    passed_out: *mut bool,
    out_json: *mut *mut c_char,
) -> RpStatus {
    guard(|| {
        if passed_out.is_null() || out_json.is_null() {
            set_error("null output pointer");
            return RpStatus::NullPointer;
        }
        let report = run_verification(seed);
        *passed_out = report.passed;
        match serde_json::to_string_pretty(&report) {
            Ok(json) => write_string(out_json, json),
            Err(err) => {
                set_error(err.to_string());
                RpStatus::RunFailed
            }
        }
    })
}
