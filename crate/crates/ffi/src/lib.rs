//! C ABI over the cellfree-haps simulator.
//!
//! Objects cross the boundary as opaque handles created by `cfh_*_new`-style
//! constructors and released by the matching `cfh_*_free`. Every fallible call
//! returns a [`CfhStatus`]; the message of the last failure on the calling
//! thread is available from [`cfh_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cellfree_haps::channel::LinkGains;
use cellfree_haps::experiment::{run, ExperimentConfig};
use cellfree_haps::optimizer::{optimize_scheme, BcdOptions, BcdProblem, OptimizationTrace, OptimizeMode};
use cellfree_haps::rate::{PowerAllocation, Scheme, SinrModel};
use cellfree_haps::scenario::{build_scenario, NetworkScenario, ScenarioParams};
use cellfree_haps::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Solver = 4,
    Domain = 5,
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfhScheme {
    AerialCellfree = 0,
    AerialCellular = 1,
    TerrestrialCellfree = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfhOptimizeMode {
    None = 0,
    Power = 1,
    Placement = 2,
    Joint = 3,
}

/// A user drop with UxNB and HAPS geometry.
pub struct CfhScenario {
    inner: NetworkScenario,
}

/// Result of an optimisation run.
pub struct CfhTrace {
    inner: OptimizationTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> CfhStatus {
    if err.is_config() {
        CfhStatus::Config
    } else if err.is_solver() {
        CfhStatus::Solver
    } else {
        match err {
            Error::Io(_) | Error::Csv(_) => CfhStatus::Io,
            _ => CfhStatus::Domain,
        }
    }
}

fn fail(status: CfhStatus, msg: impl Into<String>) -> CfhStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CfhStatus) -> CfhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CfhStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: cellfree_haps::Result<T>) -> Result<T, CfhStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, CfhStatus> {
    if s.is_null() {
        return Err(fail(CfhStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CfhStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> CfhStatus {
    if out.is_null() {
        return fail(CfhStatus::NullPointer, "null output buffer");
    }
    if len < values.len() {
        return fail(
            CfhStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    CfhStatus::Ok
}

unsafe fn write_string(s: String, out: *mut *mut c_char) -> CfhStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CfhStatus::Ok
        }
        Err(_) => fail(CfhStatus::Domain, "output contains a NUL byte"),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a user drop from scenario parameters given as JSON; missing fields
/// take their defaults.
///
/// # Safety
/// `params_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfh_scenario_new(
    params_json: *const c_char,
    seed: u64,
    out: *mut *mut CfhScenario,
) -> CfhStatus {
    guard(|| {
        if out.is_null() {
            return fail(CfhStatus::NullPointer, "null output handle");
        }
        let text = tri!(read_str(params_json));
        let params: ScenarioParams = tri!(serde_json::from_str(text).map_err(|e| fail(CfhStatus::Config, e.to_string())));
        let inner = tri!(lift(build_scenario(&params, seed)));
        *out = Box::into_raw(Box::new(CfhScenario { inner }));
        CfhStatus::Ok
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from [`cfh_scenario_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfh_scenario_free(scenario: *mut CfhScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_scenario_num_users(scenario: *const CfhScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.inner.num_users())
}

/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_scenario_num_uxnbs(scenario: *const CfhScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.inner.num_uxnbs())
}

/// Closed-form SINR of every user under a uniform power split, written to
/// `out[0..K]`.
///
/// # Safety
/// `scenario` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfh_scenario_uniform_sinr(
    scenario: *const CfhScenario,
    out: *mut f64,
    len: usize,
) -> CfhStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(CfhStatus::NullPointer, "null scenario");
        };
        let gains = tri!(lift(LinkGains::compute(&s.inner)));
        let model = SinrModel::new(&s.inner, &gains);
        let sinr = tri!(lift(model.sinr(&PowerAllocation::uniform_for(&s.inner))));
        copy_out(&sinr, out, len)
    })
}

/// Optimise the power split and/or UxNB placement of a drop.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfh_optimize(
    scenario: *const CfhScenario,
    scheme: CfhScheme,
    mode: CfhOptimizeMode,
    out: *mut *mut CfhTrace,
) -> CfhStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(CfhStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(CfhStatus::NullPointer, "null output handle");
        }
        let scheme = match scheme {
            CfhScheme::AerialCellfree => Scheme::AerialCellfree,
            CfhScheme::AerialCellular => Scheme::AerialCellular,
            CfhScheme::TerrestrialCellfree => Scheme::TerrestrialCellfree,
        };
        let mode = match mode {
            CfhOptimizeMode::None => OptimizeMode::None,
            CfhOptimizeMode::Power => OptimizeMode::Power,
            CfhOptimizeMode::Placement => OptimizeMode::Placement,
            CfhOptimizeMode::Joint => OptimizeMode::Joint,
        };
        let problem = tri!(lift(BcdProblem::new(&s.inner, scheme)));
        let init = tri!(lift(problem.initial_allocation()));
        let opts = BcdOptions {
            mode,
            ..Default::default()
        };
        let inner = tri!(lift(optimize_scheme(&problem, &init, &opts)));
        *out = Box::into_raw(Box::new(CfhTrace { inner }));
        CfhStatus::Ok
    })
}

/// # Safety
/// `trace` must be NULL or a handle from [`cfh_optimize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_free(trace: *mut CfhTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Final min-SINR (linear), or NaN for a NULL handle.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_min_sinr(trace: *const CfhTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.inner.last().min_sinr)
}

/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_outer_iterations(trace: *const CfhTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.outer_iterations())
}

/// Final power split `P_km`, row-major in `(k, m)`, `K*M` values.
///
/// # Safety
/// `trace` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_power(trace: *const CfhTrace, out: *mut f64, len: usize) -> CfhStatus {
    guard(|| match trace.as_ref() {
        Some(t) => copy_out(&t.inner.last().alloc.p, out, len),
        None => fail(CfhStatus::NullPointer, "null trace"),
    })
}

/// Final UxNB positions as `x0, y0, x1, y1, ...`, `2*M` values.
///
/// # Safety
/// `trace` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_positions(trace: *const CfhTrace, out: *mut f64, len: usize) -> CfhStatus {
    guard(|| match trace.as_ref() {
        Some(t) => {
            let flat: Vec<f64> = t.inner.last().positions.iter().flatten().copied().collect();
            copy_out(&flat, out, len)
        }
        None => fail(CfhStatus::NullPointer, "null trace"),
    })
}

/// Whole trace as JSON; release with [`cfh_string_free`].
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfh_trace_to_json(trace: *const CfhTrace, out: *mut *mut c_char) -> CfhStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(CfhStatus::NullPointer, "null trace");
        };
        if out.is_null() {
            return fail(CfhStatus::NullPointer, "null output pointer");
        }
        write_string(tri!(lift(t.inner.to_json())), out)
    })
}

/// Run an experiment config (JSON) and return the results CSV; release with
/// [`cfh_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfh_run_experiment(config_json: *const c_char, out: *mut *mut c_char) -> CfhStatus {
    guard(|| {
        if out.is_null() {
            return fail(CfhStatus::NullPointer, "null output pointer");
        }
        let text = tri!(read_str(config_json));
        let cfg = tri!(lift(ExperimentConfig::from_json(text)));
        let res = tri!(lift(run(&cfg)));
        let mut buf = Vec::new();
        tri!(lift(res.write_csv(&mut buf)));
        write_string(String::from_utf8(buf).unwrap_or_default(), out)
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
