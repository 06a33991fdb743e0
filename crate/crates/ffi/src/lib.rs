//! C ABI over `v2i-core`.
//!
//! Conventions:
//! - Every fallible call returns a [`V2iStatus`] and writes results through
//!   out-pointers. On failure the out-pointers are left untouched and
//!   [`v2i_last_error_message`] describes the error.
//! - Scenarios and optimization results are opaque handles, created by this
//!   library and released with the matching `*_free` function.
//! - Strings returned by [`v2i_scenario_echo`] are owned by the caller and
//!   released with [`v2i_string_free`].
//! - Panics never cross the boundary; they surface as `V2I_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use v2i_core::dcf::{solve_fixed_point, MacParams};
use v2i_core::optimize::{optimize_retry, OptimizationResult};
use v2i_core::pipeline::Metrics;
use v2i_core::scenario::Scenario;
use v2i_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2iStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownKey = 4,
    UnitViolation = 5,
    Domain = 6,
    Convergence = 7,
    DegenerateDenominator = 8,
    ConfigMismatch = 9,
    Io = 10,
    OutOfRange = 11,
    Panic = 12,
}

/// Opaque scenario handle.
pub struct V2iScenario(Scenario);

/// Opaque optimization result handle.
pub struct V2iOptimization(OptimizationResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct V2iFixedPoint {
    pub tau: f64,
    pub p_c: f64,
    pub residual: f64,
    pub iterations: u32,
}

/// Model outputs for one operating point. Units: veh/m, veh/s, s, bits/s.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct V2iMetrics {
    pub density: f64,
    pub flow: f64,
    pub n_mean: f64,
    pub stations: f64,
    pub tau: f64,
    pub p_c: f64,
    pub p_tran: f64,
    pub p_s: f64,
    pub mean_slot: f64,
    pub rho: f64,
    pub p_block: f64,
    pub throughput: f64,
    pub throughput_classic: f64,
    pub t_delay: f64,
    pub t_delay_weighted: f64,
}

impl From<Metrics> for V2iMetrics {
    fn from(m: Metrics) -> Self {
        V2iMetrics {
            density: m.density,
            flow: m.flow,
            n_mean: m.n_mean,
            stations: m.stations,
            tau: m.tau,
            p_c: m.p_c,
            p_tran: m.p_tran,
            p_s: m.p_s,
            mean_slot: m.mean_slot,
            rho: m.rho,
            p_block: m.p_block,
            throughput: m.throughput,
            throughput_classic: m.throughput_classic,
            t_delay: m.t_delay,
            t_delay_weighted: m.t_delay_weighted,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> V2iStatus {
    match err {
        Error::Domain(_) => V2iStatus::Domain,
        Error::Convergence(_) => V2iStatus::Convergence,
        Error::DegenerateDenominator => V2iStatus::DegenerateDenominator,
        Error::RetryLimit { source, .. } => status_of(source),
        Error::ConfigMismatch(_) => V2iStatus::ConfigMismatch,
        Error::Parse { .. } => V2iStatus::Parse,
        Error::UnknownKey { .. } => V2iStatus::UnknownKey,
        Error::UnitViolation(_) => V2iStatus::UnitViolation,
        Error::Io(_) => V2iStatus::Io,
    }
}

struct Failure(V2iStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> V2iStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            V2iStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            V2iStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(V2iStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(V2iStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the most recent failed call on this thread, or an empty
/// string. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn v2i_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn v2i_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New scenario holding every default. Never null.
#[no_mangle]
pub extern "C" fn v2i_scenario_default() -> *mut V2iScenario {
    Box::into_raw(Box::new(V2iScenario(Scenario::default())))
}

/// Parses scenario text (`[section]` / `key = value`).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_scenario_parse(text: *const c_char, out: *mut *mut V2iScenario) -> V2iStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let sc = Scenario::parse(text)?;
        *out = Box::into_raw(Box::new(V2iScenario(sc)));
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_scenario_load(path: *const c_char, out: *mut *mut V2iScenario) -> V2iStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let sc = Scenario::load(path)?;
        *out = Box::into_raw(Box::new(V2iScenario(sc)));
        Ok(())
    })
}

/// Sets one key, e.g. `("mac.cw_min", "64")`. The scenario is unchanged if
/// the result would be invalid.
///
/// # Safety
/// `sc` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn v2i_scenario_set(
    sc: *mut V2iScenario,
    key: *const c_char,
    value: *const c_char,
) -> V2iStatus {
    guard(|| {
        let sc = out_arg(sc, "scenario")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let mut next = sc.0.clone();
        next.set(key, value)?;
        next.validate()?;
        sc.0 = next;
        Ok(())
    })
}

/// Resolved scenario text. Release with [`v2i_string_free`].
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_scenario_echo(sc: *const V2iScenario, out: *mut *mut c_char) -> V2iStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        let out = out_arg(out, "out")?;
        *out = CString::new(sc.0.echo())
            .map_err(|_| Failure(V2iStatus::InvalidUtf8, "echo contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn v2i_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `sc` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn v2i_scenario_free(sc: *mut V2iScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Evaluates the scenario at its configured retry limit.
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_solve(sc: *const V2iScenario, out: *mut V2iMetrics) -> V2iStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        let out = out_arg(out, "out")?;
        *out = sc.0.model()?.evaluate()?.into();
        Ok(())
    })
}

/// Backoff fixed point for `n` stations with default MAC timings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_fixed_point(
    n: u32,
    cw_min: u32,
    max_stage: u32,
    tolerance: f64,
    out: *mut V2iFixedPoint,
) -> V2iStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mac = MacParams {
            cw_min,
            max_stage,
            ..MacParams::default()
        };
        let fp = solve_fixed_point(n, &mac, tolerance)?;
        *out = V2iFixedPoint {
            tau: fp.tau,
            p_c: fp.p_c,
            residual: fp.residual,
            iterations: fp.iterations,
        };
        Ok(())
    })
}

/// Searches the scenario's retry-limit range under its delay bound.
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2i_optimize(sc: *const V2iScenario, out: *mut *mut V2iOptimization) -> V2iStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        let out = out_arg(out, "out")?;
        let res = optimize_retry(&sc.0.optimization_request()?)?;
        *out = Box::into_raw(Box::new(V2iOptimization(res)));
        Ok(())
    })
}

/// # Safety
/// `opt` must be a live handle from [`v2i_optimize`].
#[no_mangle]
pub unsafe extern "C" fn v2i_optimization_m_star(opt: *const V2iOptimization) -> u32 {
    opt.as_ref().map_or(0, |o| o.0.m_star)
}

/// Whether any retry limit met the delay bound.
///
/// # Safety
/// `opt` must be a live handle from [`v2i_optimize`].
#[no_mangle]
pub unsafe extern "C" fn v2i_optimization_feasible(opt: *const V2iOptimization) -> bool {
    opt.as_ref().is_some_and(|o| o.0.feasible)
}

/// Number of evaluated retry limits.
///
/// # Safety
/// `opt` must be a live handle from [`v2i_optimize`].
#[no_mangle]
pub unsafe extern "C" fn v2i_optimization_len(opt: *const V2iOptimization) -> usize {
    opt.as_ref().map_or(0, |o| o.0.per_m.len())
}

/// Row `index` of the per-limit table, in ascending `m`.
///
/// # Safety
/// `opt` must be a live handle; `m`, `feasible` and `metrics` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn v2i_optimization_row(
    opt: *const V2iOptimization,
    index: usize,
    m: *mut u32,
    feasible: *mut bool,
    metrics: *mut V2iMetrics,
) -> V2iStatus {
    guard(|| {
        let opt = handle(opt, "optimization")?;
        let m = out_arg(m, "m")?;
        let feasible = out_arg(feasible, "feasible")?;
        let metrics = out_arg(metrics, "metrics")?;
        let row = opt.0.per_m.get(index).ok_or_else(|| {
            Failure(
                V2iStatus::OutOfRange,
                format!("row {index} out of range (len {})", opt.0.per_m.len()),
            )
        })?;
        *m = row.m;
        *feasible = row.feasible;
        *metrics = row.metrics.into();
        Ok(())
    })
}

/// # Safety
/// `opt` must be null or a handle from [`v2i_optimize`], freed once.
#[no_mangle]
pub unsafe extern "C" fn v2i_optimization_free(opt: *mut V2iOptimization) {
    if !opt.is_null() {
        drop(Box::from_raw(opt));
    }
}
