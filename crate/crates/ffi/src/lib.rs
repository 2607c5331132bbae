//! C ABI for the benchmark problems, the Bregman iteration and the stopping
//! rule. The header is generated into `include/bregman_ocp.h` at build time.
//!
//! Every fallible function returns a [`BocStatus`]; on failure the message is
//! available from [`boc_last_error`] on the same thread. Panics are caught at
//! the boundary and reported as `BOC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bregman_ocp::bench::{build_case, BenchmarkCase, CaseId};
use bregman_ocp::bregman::{bregman_step, recover_control_field, BregmanState, RegularizationSchedule};
use bregman_ocp::problem::ControlProblem;
use bregman_ocp::ssn::NewtonOptions;
use bregman_ocp::stopping::{self, perturb, NoiseSpec, Regularity};
use bregman_ocp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownCase = 3,
    SolverFailure = 4,
    Panic = 5,
}

/// A benchmark problem on a fixed mesh.
pub struct BocProblem {
    problem: ControlProblem,
    case: BenchmarkCase,
}

/// A Bregman iteration on (possibly noisy) data of a [`BocProblem`].
pub struct BocRun {
    problem: ControlProblem,
    schedule: RegularizationSchedule,
    state: BregmanState,
    newton: NewtonOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> BocStatus {
    match e {
        Error::UnknownCase(_) => BocStatus::UnknownCase,
        Error::InvalidParameter(_) | Error::InvalidBounds { .. } | Error::Config { .. } => BocStatus::InvalidArgument,
        _ => BocStatus::SolverFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BocStatus>) -> BocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BocStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BocStatus::Panic
        }
    }
}

fn fail(e: Error) -> BocStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn invalid(msg: impl Into<String>) -> BocStatus {
    set_error(msg);
    BocStatus::InvalidArgument
}

fn null(what: &str) -> BocStatus {
    set_error(format!("{what} is null"));
    BocStatus::NullPointer
}

fn regularity(kappa: f64) -> Regularity {
    if kappa < 0.0 {
        Regularity::SourceCondition
    } else {
        Regularity::ActiveSet { kappa }
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn boc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: caller guarantees `len` writable bytes at `buf`.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn boc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds benchmark `case` ("ex1".."ex4") with `dof` nodes (`0` selects the
/// desk default).
///
/// # Safety
/// `case` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn boc_problem_new(case: *const c_char, dof: usize, out: *mut *mut BocProblem) -> BocStatus {
    guard(|| {
        if case.is_null() {
            return Err(null("case"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let name = unsafe { CStr::from_ptr(case) }
            .to_str()
            .map_err(|_| invalid("case is not UTF-8"))?;
        let id: CaseId = name.parse().map_err(fail)?;
        let dof = if dof == 0 { BenchmarkCase::new(id).desk_dof } else { dof };
        let (problem, case) = build_case(id, dof).map_err(fail)?;
        let handle = Box::into_raw(Box::new(BocProblem { problem, case }));
        // SAFETY: `out` checked non-null.
        unsafe { *out = handle };
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from [`boc_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boc_problem_free(problem: *mut BocProblem) {
    if !problem.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Number of nodal degrees of freedom, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_problem_dof(problem: *const BocProblem) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { problem.as_ref() }.map_or(0, |p| p.problem.space().num_dofs())
}

/// Number of quadrature points carrying control values, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_problem_num_quad(problem: *const BocProblem) -> usize {
    // SAFETY: as above.
    unsafe { problem.as_ref() }.map_or(0, |p| p.problem.space().num_quad())
}

/// Starts a Bregman iteration with constant `alpha` on the problem's data
/// perturbed to noise level `delta` with `seed` (`delta = 0` uses exact data).
/// The run keeps its own copy of the problem, so `problem` may be freed
/// afterwards.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn boc_run_new(
    problem: *const BocProblem,
    alpha: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut BocRun,
) -> BocStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let schedule = RegularizationSchedule::constant(alpha).map_err(fail)?;
        let target = perturb(p.problem.target(), NoiseSpec { delta, seed }).map_err(fail)?;
        let noisy = p.problem.with_target(target).map_err(fail)?;
        let reference = p.case.exact_control_field(noisy.space()).map_err(fail)?;
        let state = BregmanState::new(&noisy).with_reference(reference).map_err(fail)?;
        let run = BocRun {
            problem: noisy,
            schedule,
            state,
            newton: NewtonOptions::default(),
        };
        // SAFETY: `out` checked non-null.
        unsafe { *out = Box::into_raw(Box::new(run)) };
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`boc_run_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boc_run_free(run: *mut BocRun) {
    if !run.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Performs one outer step. If `error_out` is non-null it receives the L²
/// distance of the new iterate to the exact control.
///
/// # Safety
/// `run` must be a live handle; `error_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn boc_run_step(run: *mut BocRun, error_out: *mut f64) -> BocStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let r = unsafe { run.as_mut() }.ok_or_else(|| null("run"))?;
        bregman_step(&mut r.state, &r.problem, &r.schedule, &r.newton).map_err(fail)?;
        if !error_out.is_null() {
            let e = r.state.last().and_then(|rec| rec.error).unwrap_or(f64::NAN);
            // SAFETY: checked non-null.
            unsafe { *error_out = e };
        }
        Ok(())
    })
}

/// Completed outer steps, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_run_iteration(run: *const BocRun) -> usize {
    // SAFETY: as above.
    unsafe { run.as_ref() }.map_or(0, |r| r.state.k())
}

/// Writes the current control at the quadrature points into `buf`, which
/// must hold exactly [`boc_problem_num_quad`] values.
///
/// # Safety
/// `run` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boc_run_control(run: *const BocRun, buf: *mut f64, len: usize) -> BocStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let r = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let u = recover_control_field(&r.state, &r.problem).map_err(fail)?;
        if len != u.values().len() {
            return Err(invalid(format!("buffer holds {len} values, need {}", u.values().len())));
        }
        // SAFETY: `buf` holds `len` doubles.
        unsafe { ptr::copy_nonoverlapping(u.values().as_ptr(), buf, len) };
        Ok(())
    })
}

/// A priori stopping index for constant `alpha`. A negative `kappa` selects
/// the source condition. `capped_out` (optional) is set when no violation
/// occurred up to `k_max`.
///
/// # Safety
/// `k_out` must be writable; `capped_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn boc_decide_stop(
    alpha: f64,
    delta: f64,
    tau: f64,
    kappa: f64,
    k_max: usize,
    k_out: *mut usize,
    capped_out: *mut bool,
) -> BocStatus {
    guard(|| {
        if k_out.is_null() {
            return Err(null("k_out"));
        }
        let schedule = RegularizationSchedule::constant(alpha).map_err(fail)?;
        let d = stopping::decide_stop(&schedule, delta, tau, regularity(kappa), k_max).map_err(fail)?;
        // SAFETY: checked non-null / optional.
        unsafe {
            *k_out = d.k;
            if !capped_out.is_null() {
                *capped_out = d.k_max_reached;
            }
        }
        Ok(())
    })
}

/// Cumulative noise bound after `k` steps with constant `alpha`; NaN on
/// invalid `alpha`.
#[no_mangle]
pub extern "C" fn boc_noise_bound(k: usize, alpha: f64, delta: f64) -> f64 {
    match RegularizationSchedule::constant(alpha) {
        Ok(s) => stopping::noise_bound(k, &s, delta),
        Err(e) => {
            set_error(e.to_string());
            f64::NAN
        }
    }
}

/// Cumulative regularization bound after `k` steps with constant `alpha`;
/// a negative `kappa` selects the source condition. NaN on invalid input.
#[no_mangle]
pub extern "C" fn boc_reg_bound(k: usize, alpha: f64, kappa: f64) -> f64 {
    let reg = regularity(kappa);
    match RegularizationSchedule::constant(alpha).and_then(|s| reg.validate().map(|()| s)) {
        Ok(s) => stopping::reg_bound(k, &s, reg),
        Err(e) => {
            set_error(e.to_string());
            f64::NAN
        }
    }
}
