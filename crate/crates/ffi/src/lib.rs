//! C interface to the `secgame` solver.
//!
//! Scenarios and solve reports are opaque handles owned by the caller and
//! released with the matching `_free` function. Every entry point returns a
//! [`SecgameStatus`]; on failure a message is available from
//! [`secgame_last_error_message`] on the calling thread. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use secgame::best_response::best_response_solve;
use secgame::config::parse_scenario;
use secgame::scenarios::{builtin, Scenario, Solved};
use secgame::verify::verify_equilibrium;
use secgame::vi::{natural_residual, BoxVi};
use secgame::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecgameStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    NotConverged = 4,
    Numerical = 5,
    Panic = 6,
}

/// A validated scenario: model, starting point and solver settings.
pub struct SecgameScenario {
    inner: Scenario,
}

/// The outcome of a solve.
pub struct SecgameReport {
    solved: Solved,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: SecgameStatus,
    message: String,
}

impl Failure {
    fn new(status: SecgameStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NonFinite { .. } | Error::DegenerateDirection => SecgameStatus::Numerical,
            _ => SecgameStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<SecgameStatus, Failure>) -> SecgameStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SecgameStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(SecgameStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SecgameStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SecgameStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn point<'a>(x: *const f64, len: usize, dim: usize) -> Result<&'a [f64], Failure> {
    if x.is_null() {
        return Err(Failure::new(SecgameStatus::NullPointer, "point is null"));
    }
    if len != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: len,
        }
        .into());
    }
    Ok(std::slice::from_raw_parts(x, len))
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<SecgameStatus, Failure> {
    if buf.is_null() {
        return Err(Failure::new(SecgameStatus::NullPointer, "output buffer is null"));
    }
    if len < values.len() {
        return Err(Failure::new(
            SecgameStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(SecgameStatus::Ok)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            SecgameStatus::NullPointer,
            "output handle pointer is null",
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn new_scenario(inner: Scenario) -> Result<SecgameScenario, Failure> {
    inner.validate()?;
    Ok(SecgameScenario { inner })
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn secgame_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a scenario from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be NULL or a valid NUL-terminated string; `out` must be NULL
/// or point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SecgameScenario,
) -> SecgameStatus {
    guard(|| {
        let text = text(json, "json")?;
        let scenario = new_scenario(parse_scenario(text, "ffi")?)?;
        store(out, scenario)?;
        Ok(SecgameStatus::Ok)
    })
}

/// Load a built-in scenario by name (`exp1` or `exp5`).
///
/// # Safety
/// `name` must be NULL or a valid NUL-terminated string; `out` must be NULL
/// or point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_builtin(
    name: *const c_char,
    out: *mut *mut SecgameScenario,
) -> SecgameStatus {
    guard(|| {
        let name = text(name, "name")?;
        let scenario = builtin(name).ok_or_else(|| Failure::from(Error::UnknownScenario(name.into())))?;
        store(out, new_scenario(scenario)?)?;
        Ok(SecgameStatus::Ok)
    })
}

/// Release a scenario. NULL is ignored.
///
/// # Safety
/// `scenario` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_free(scenario: *mut SecgameScenario) {
    if !scenario.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(scenario))));
    }
}

/// Retailer count `m`, market count `n` and decision-vector length
/// `m*n + 2m`. Any output pointer may be NULL.
///
/// # Safety
/// `scenario` must be NULL or a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_dims(
    scenario: *const SecgameScenario,
    m: *mut usize,
    n: *mut usize,
    dim: *mut usize,
) -> SecgameStatus {
    guard(|| {
        let model = &handle(scenario, "scenario")?.inner.model;
        let (rm, rn) = (model.m(), model.n());
        for (p, v) in [(m, rm), (n, rn), (dim, rm * rn + 2 * rm)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(SecgameStatus::Ok)
    })
}

/// Copy the scenario's starting point (quantities row-major, then levels,
/// then multipliers) into `buf`.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `buf` must be NULL or hold `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_initial(
    scenario: *const SecgameScenario,
    buf: *mut f64,
    len: usize,
) -> SecgameStatus {
    guard(|| copy_out(&handle(scenario, "scenario")?.inner.initial.to_flat(), buf, len))
}

/// Evaluate the variational-inequality operator at `x` into `out`. Both
/// buffers have the decision-vector length.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `x` must hold `len` readable
/// doubles and `out` `len` writable doubles (either may be NULL).
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_operator(
    scenario: *const SecgameScenario,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SecgameStatus {
    guard(|| {
        let s = &handle(scenario, "scenario")?.inner;
        let problem = s.problem()?;
        let x = point(x, len, problem.dim())?;
        copy_out(&problem.assemble_operator(x)?, out, len)
    })
}

/// Natural residual `|X - P(X - F(X))|_inf` at `x`.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `x` must hold `len` readable
/// doubles; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_residual(
    scenario: *const SecgameScenario,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SecgameStatus {
    guard(|| {
        let s = &handle(scenario, "scenario")?.inner;
        let problem = s.problem()?;
        let x = point(x, len, problem.dim())?;
        let value = natural_residual(&problem, x)?;
        copy_out(&[value], out, 1)
    })
}

/// Expected utility of zero-based `retailer` at `x`.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `x` must hold `len` readable
/// doubles; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_utility(
    scenario: *const SecgameScenario,
    retailer: usize,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SecgameStatus {
    guard(|| {
        let s = &handle(scenario, "scenario")?.inner;
        let problem = s.problem()?;
        let d = problem.split(point(x, len, problem.dim())?)?;
        let value = s.model.expected_utility(retailer, &d.q, &d.u)?;
        copy_out(&[value], out, 1)
    })
}

/// Grid-search every retailer's unilateral deviations from `x` with
/// `density` points per axis. Writes the largest utility gain and whether it
/// is within the default tolerance.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `x` must hold `len` readable
/// doubles; outputs must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_verify(
    scenario: *const SecgameScenario,
    x: *const f64,
    len: usize,
    density: usize,
    max_improvement: *mut f64,
    certified: *mut bool,
) -> SecgameStatus {
    guard(|| {
        let s = &handle(scenario, "scenario")?.inner;
        let problem = s.problem()?;
        let d = problem.split(point(x, len, problem.dim())?)?;
        if max_improvement.is_null() || certified.is_null() {
            return Err(Failure::new(SecgameStatus::NullPointer, "output pointer is null"));
        }
        let report = verify_equilibrium(&s.model, &d, density)?;
        *max_improvement = report.max_improvement;
        *certified = report.certified;
        Ok(SecgameStatus::Ok)
    })
}

fn finish(solved: Solved, out: *mut *mut SecgameReport) -> Result<SecgameStatus, Failure> {
    let status = if solved.report.converged {
        SecgameStatus::Ok
    } else {
        set_last_error(format!(
            "not converged after {} iterations (residual {:e})",
            solved.report.iterations, solved.report.final_residual
        ));
        SecgameStatus::NotConverged
    };
    unsafe { store(out, SecgameReport { solved })? };
    Ok(status)
}

/// Solve with the projection-contraction method. A report is produced even
/// when the status is `NotConverged`; the caller frees it either way.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `out` must be NULL or point to
/// writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_solve(
    scenario: *const SecgameScenario,
    out: *mut *mut SecgameReport,
) -> SecgameStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(
                SecgameStatus::NullPointer,
                "output handle pointer is null",
            ));
        }
        finish(handle(scenario, "scenario")?.inner.solve()?, out)
    })
}

/// Solve by alternating best responses; otherwise as
/// [`secgame_scenario_solve`].
///
/// # Safety
/// Same contract as [`secgame_scenario_solve`].
#[no_mangle]
pub unsafe extern "C" fn secgame_scenario_best_response(
    scenario: *const SecgameScenario,
    out: *mut *mut SecgameReport,
) -> SecgameStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(
                SecgameStatus::NullPointer,
                "output handle pointer is null",
            ));
        }
        let s = &handle(scenario, "scenario")?.inner;
        let problem = s.problem()?;
        let report = best_response_solve(&problem, &s.solver, &s.initial.to_flat())?;
        finish(Solved::from_report(problem, report)?, out)
    })
}

/// Release a report. NULL is ignored.
///
/// # Safety
/// `report` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_free(report: *mut SecgameReport) {
    if !report.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(report))));
    }
}

/// Whether the solve met its tolerance. False for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_converged(report: *const SecgameReport) -> bool {
    report.as_ref().is_some_and(|r| r.solved.report.converged)
}

/// Iterations (sweeps for best response). Zero for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_iterations(report: *const SecgameReport) -> usize {
    report.as_ref().map_or(0, |r| r.solved.report.iterations)
}

/// Final natural residual. NaN for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_residual(report: *const SecgameReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.solved.report.final_residual)
}

/// Copy the solution vector into `buf`.
///
/// # Safety
/// `report` must be NULL or a live handle; `buf` must be NULL or hold `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_solution(
    report: *const SecgameReport,
    buf: *mut f64,
    len: usize,
) -> SecgameStatus {
    guard(|| copy_out(&handle(report, "report")?.solved.report.solution, buf, len))
}

/// Copy each retailer's expected utility at the solution into `buf`.
///
/// # Safety
/// `report` must be NULL or a live handle; `buf` must be NULL or hold `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn secgame_report_utilities(
    report: *const SecgameReport,
    buf: *mut f64,
    len: usize,
) -> SecgameStatus {
    guard(|| copy_out(&handle(report, "report")?.solved.utilities, buf, len))
}
