//! C ABI over the placement engine.
//!
//! Every handle is opaque and owned by the caller once returned; release it
//! with the matching `si_*_free`. Fallible calls return an [`SiStatus`] and
//! write their result through an out pointer, which is left untouched on
//! failure. The message for the most recent failure on the calling thread is
//! available from [`si_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use swarm_infer::experiments::{generate_scenario, ScenarioConfig};
use swarm_infer::{run_stream, solve_exact, HeuristicParams, Scenario, SolveResult, SolveStatus, StreamReport, Template};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    /// The handle holds no solution to query.
    Infeasible = 4,
    OutOfRange = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Outcome of the exact solver.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiSolveStatus {
    Optimal = 0,
    TimeLimit = 1,
    Infeasible = 2,
}

pub struct SiScenario(Scenario);

pub struct SiSolveResult(SolveResult);

pub struct SiStreamReport(StreamReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

type Outcome<T> = Result<T, (SiStatus, String)>;

fn invalid(err: impl std::fmt::Display) -> (SiStatus, String) {
    (SiStatus::InvalidInput, err.to_string())
}

/// Runs `body` behind the panic boundary and stores `Ok` values in `out`.
fn guard<T>(out: *mut T, body: impl FnOnce() -> Outcome<T>) -> SiStatus {
    if out.is_null() {
        set_error("null out pointer");
        return SiStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(value)) => {
            // SAFETY: checked non-null; the caller provides writable storage.
            unsafe { out.write(value) };
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SiStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SiStatus::Internal
        }
    }
}

fn deref<'a, T>(handle: *const T, what: &str) -> Outcome<&'a T> {
    // SAFETY: non-null handles come from this library and are live until freed.
    unsafe { handle.as_ref() }.ok_or_else(|| (SiStatus::NullPointer, format!("null {what}")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn free<T>(handle: *mut T) {
    if !handle.is_null() {
        // SAFETY: the handle was produced by `boxed` and is freed once.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn si_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn si_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scenario document and checks it for consistency.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_from_json(json: *const c_char, out: *mut *mut SiScenario) -> SiStatus {
    guard(out, || {
        if json.is_null() {
            return Err((SiStatus::NullPointer, "null json".into()));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (SiStatus::InvalidUtf8, e.to_string()))?;
        let scenario: Scenario = serde_json::from_str(text).map_err(invalid)?;
        let issues = scenario.validate();
        if let Some(first) = issues.first() {
            return Err(invalid(format!("{} issue(s), first: {first}", issues.len())));
        }
        Ok(boxed(SiScenario(scenario)))
    })
}

/// Generates a random scenario with the default configuration.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_generate(
    n_uavs: usize,
    n_requests: usize,
    depth: usize,
    residual: bool,
    seed: u64,
    out: *mut *mut SiScenario,
) -> SiStatus {
    guard(out, || {
        let template = if residual { Template::Residual } else { Template::Sequential };
        generate_scenario(&ScenarioConfig::default(), n_uavs, n_requests, template, depth, seed)
            .map(|s| boxed(SiScenario(s)))
            .map_err(invalid)
    })
}

/// Serializes a scenario; free the string with `si_string_free`.
///
/// # Safety
/// `scenario` must be NULL or live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_to_json(scenario: *const SiScenario, out: *mut *mut c_char) -> SiStatus {
    guard(out, || {
        let s = deref(scenario, "scenario")?;
        let text = serde_json::to_string(&s.0).map_err(invalid)?;
        Ok(CString::new(text).map_err(invalid)?.into_raw())
    })
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `scenario` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_node_count(scenario: *const SiScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.swarm.len())
}

/// Number of requests, or 0 for NULL.
///
/// # Safety
/// `scenario` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_request_count(scenario: *const SiScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.requests.len())
}

/// # Safety
/// `scenario` must be NULL or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_scenario_free(scenario: *mut SiScenario) {
    free(scenario)
}

/// Solves the joint placement exactly. A `time_limit_secs` of zero or less,
/// or a non-finite one, means no limit.
///
/// # Safety
/// `scenario` must be NULL or live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_solve_exact(
    scenario: *const SiScenario,
    time_limit_secs: f64,
    out: *mut *mut SiSolveResult,
) -> SiStatus {
    guard(out, || {
        let s = deref(scenario, "scenario")?;
        let limit = (time_limit_secs.is_finite() && time_limit_secs > 0.0)
            .then(|| Duration::from_secs_f64(time_limit_secs));
        solve_exact(&s.0, limit)
            .map(|r| boxed(SiSolveResult(r)))
            .map_err(invalid)
    })
}

/// # Safety
/// `result` must be live.
#[no_mangle]
pub unsafe extern "C" fn si_solve_result_status(result: *const SiSolveResult) -> SiSolveStatus {
    match result.as_ref().map(|r| r.0.status) {
        Some(SolveStatus::Optimal) => SiSolveStatus::Optimal,
        Some(SolveStatus::TimeLimit) => SiSolveStatus::TimeLimit,
        Some(SolveStatus::Infeasible) | None => SiSolveStatus::Infeasible,
    }
}

/// Total latency of the returned placements.
///
/// # Safety
/// `result` must be NULL or live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_solve_result_total(result: *const SiSolveResult, out: *mut f64) -> SiStatus {
    guard(out, || {
        deref(result, "solve result")?
            .0
            .total()
            .ok_or_else(|| (SiStatus::Infeasible, "no feasible placement".into()))
    })
}

/// Copies the nodes hosting layers 1..=M of `request` into `nodes`, which
/// holds `capacity` entries. `len` receives M even when the buffer is too
/// small, in which case `SI_STATUS_OUT_OF_RANGE` is returned.
///
/// # Safety
/// `result` must be NULL or live; `nodes` must hold `capacity` entries;
/// `len` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_solve_result_placement(
    result: *const SiSolveResult,
    request: usize,
    nodes: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> SiStatus {
    guard(len, || {
        let r = deref(result, "solve result")?;
        if r.0.placements.is_empty() {
            return Err((SiStatus::Infeasible, "no feasible placement".into()));
        }
        let p = r
            .0
            .placements
            .iter()
            .find(|p| p.request == request)
            .ok_or_else(|| (SiStatus::OutOfRange, format!("no request {request}")))?;
        if p.nodes.len() > capacity || nodes.is_null() {
            len.write(p.nodes.len());
            return Err((SiStatus::OutOfRange, format!("buffer holds {capacity}, need {}", p.nodes.len())));
        }
        ptr::copy_nonoverlapping(p.nodes.as_ptr(), nodes, p.nodes.len());
        Ok(p.nodes.len())
    })
}

/// Search nodes the solver expanded.
///
/// # Safety
/// `result` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn si_solve_result_nodes_explored(result: *const SiSolveResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.nodes_explored)
}

/// # Safety
/// `result` must be NULL or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_solve_result_free(result: *mut SiSolveResult) {
    free(result)
}

/// Serves the requests in order with the greedy online policy.
/// `alpha + beta` must equal 1.
///
/// # Safety
/// `scenario` must be NULL or live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_run_heuristic(
    scenario: *const SiScenario,
    alpha: f64,
    beta: f64,
    out: *mut *mut SiStreamReport,
) -> SiStatus {
    guard(out, || {
        let s = deref(scenario, "scenario")?;
        let params = HeuristicParams::new(alpha, beta).map_err(invalid)?;
        run_stream(&s.0, &params, None)
            .map(|r| boxed(SiStreamReport(r)))
            .map_err(invalid)
    })
}

/// Total latency over the accepted requests.
///
/// # Safety
/// `report` must be live.
#[no_mangle]
pub unsafe extern "C" fn si_stream_total(report: *const SiStreamReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.breakdown.total)
}

/// # Safety
/// `report` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn si_stream_rejections(report: *const SiStreamReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.rejections)
}

/// Whether `request` was accepted.
///
/// # Safety
/// `report` must be NULL or live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn si_stream_accepted(report: *const SiStreamReport, request: usize, out: *mut bool) -> SiStatus {
    guard(out, || {
        deref(report, "stream report")?
            .0
            .outcomes
            .iter()
            .find(|o| o.request == request)
            .map(|o| o.accepted)
            .ok_or_else(|| (SiStatus::OutOfRange, format!("no request {request}")))
    })
}

/// # Safety
/// `report` must be NULL or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_stream_free(report: *mut SiStreamReport) {
    free(report)
}
