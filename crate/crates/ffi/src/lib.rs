//! C ABI over `adaptube`.
//!
//! Handles are opaque and owned by the caller once created; release them
//! with the matching `_free`. Every fallible call returns an
//! [`AdaptubeStatus`] and leaves a message for
//! [`adaptube_last_error_message`] on failure. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adaptube::mpc::MpcError;
use adaptube::sim::{run_closed_loop, SimError, Termination};
use adaptube::{Controller, ExperimentConfig, Mode, RunTrace};
use nalgebra::DVector;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptubeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    DimensionMismatch = 4,
    StateOutsideX = 5,
    InitiallyInfeasible = 6,
    BrokenInvariant = 7,
    Failed = 8,
    Panic = 9,
}

/// Receding-horizon controller for one closed loop.
pub struct AdaptubeController {
    inner: Controller,
    n: usize,
    m: usize,
}

/// Completed or truncated closed-loop run.
pub struct AdaptubeTrace {
    inner: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: AdaptubeStatus, msg: impl Into<String>) -> AdaptubeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> AdaptubeStatus) -> AdaptubeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AdaptubeStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdaptubeStatus> {
    if p.is_null() {
        return Err(fail(AdaptubeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AdaptubeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_setup(
    config_json: *const c_char,
    mode: *const c_char,
) -> Result<(ExperimentConfig, Mode), AdaptubeStatus> {
    let src = read_str(config_json, "config")?;
    let mode = read_str(mode, "mode")?
        .parse::<Mode>()
        .map_err(|e| fail(AdaptubeStatus::InvalidArgument, e))?;
    let cfg = ExperimentConfig::parse(src).map_err(|e| fail(AdaptubeStatus::InvalidConfig, e.to_string()))?;
    Ok((cfg, mode))
}

fn mpc_status(e: &MpcError) -> AdaptubeStatus {
    match e {
        MpcError::DimensionMismatch(_) => AdaptubeStatus::DimensionMismatch,
        MpcError::StateOutsideX => AdaptubeStatus::StateOutsideX,
        MpcError::InitiallyInfeasible => AdaptubeStatus::InitiallyInfeasible,
        MpcError::BrokenInvariant { .. } => AdaptubeStatus::BrokenInvariant,
        _ => AdaptubeStatus::Failed,
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn adaptube_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, k);
            *buf.add(k) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adaptube_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a controller from a JSON configuration and a mode name
/// (`adaptive`, `reach` or `robust`).
///
/// # Safety
/// `config_json` and `mode` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn adaptube_controller_new(
    config_json: *const c_char,
    mode: *const c_char,
    out: *mut *mut AdaptubeController,
) -> AdaptubeStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdaptubeStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let (cfg, mode) = match read_setup(config_json, mode) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let plant = cfg.plant().expect("validated config");
        match plant.controller(mode, false) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(AdaptubeController {
                    inner: c,
                    n: plant.a_true.nrows(),
                    m: plant.b_true.ncols(),
                }));
                AdaptubeStatus::Ok
            }
            Err(e) => fail(AdaptubeStatus::Failed, e.to_string()),
        }
    })
}

/// State and input dimensions.
///
/// # Safety
/// `ctrl` must come from [`adaptube_controller_new`]; `n` and `m` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn adaptube_controller_dims(
    ctrl: *const AdaptubeController,
    n: *mut usize,
    m: *mut usize,
) -> AdaptubeStatus {
    if ctrl.is_null() || n.is_null() || m.is_null() {
        return fail(AdaptubeStatus::NullPointer, "null argument");
    }
    *n = (*ctrl).n;
    *m = (*ctrl).m;
    AdaptubeStatus::Ok
}

/// One controller step at the measured state `x` (`n` entries). Writes the
/// input to `u` (`m` entries) and the optimal cost to `cost` when non-null.
///
/// # Safety
/// `ctrl` must come from [`adaptube_controller_new`]; `x` readable for `n`
/// doubles, `u` writable for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptube_controller_step(
    ctrl: *mut AdaptubeController,
    x: *const f64,
    n: usize,
    u: *mut f64,
    m: usize,
    cost: *mut f64,
) -> AdaptubeStatus {
    guard(|| {
        if ctrl.is_null() || x.is_null() || u.is_null() {
            return fail(AdaptubeStatus::NullPointer, "null argument");
        }
        let c = &mut *ctrl;
        if n != c.n || m != c.m {
            return fail(
                AdaptubeStatus::DimensionMismatch,
                format!("expected n={} m={}, got n={n} m={m}", c.n, c.m),
            );
        }
        let xv = DVector::from_column_slice(std::slice::from_raw_parts(x, n));
        match c.inner.step(&xv) {
            Ok(outp) => {
                std::slice::from_raw_parts_mut(u, m).copy_from_slice(outp.u.as_slice());
                if !cost.is_null() {
                    *cost = outp.record.cost;
                }
                AdaptubeStatus::Ok
            }
            Err(e) => fail(mpc_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `ctrl` must be null or come from [`adaptube_controller_new`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptube_controller_free(ctrl: *mut AdaptubeController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// Runs the configured closed loop in one mode. On `InitiallyInfeasible`,
/// `BrokenInvariant` and controller failures the truncated trace is still
/// returned through `out`.
///
/// # Safety
/// As [`adaptube_controller_new`].
#[no_mangle]
pub unsafe extern "C" fn adaptube_run(
    config_json: *const c_char,
    mode: *const c_char,
    out: *mut *mut AdaptubeTrace,
) -> AdaptubeStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdaptubeStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let (cfg, mode) = match read_setup(config_json, mode) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let plant = cfg.plant().expect("validated config");
        let (trace, status) = match run_closed_loop(&plant, mode) {
            Ok(t) if t.termination == Termination::InitiallyInfeasible => (
                t,
                fail(AdaptubeStatus::InitiallyInfeasible, "infeasible at the initial state"),
            ),
            Ok(t) => (t, AdaptubeStatus::Ok),
            Err(SimError::BrokenInvariant { t, reason, partial }) => (
                *partial,
                fail(
                    AdaptubeStatus::BrokenInvariant,
                    format!("broken invariant at t={t}: {reason}"),
                ),
            ),
            Err(SimError::Controller { t, source, partial }) => (
                *partial,
                fail(mpc_status(&source), format!("controller failed at t={t}: {source}")),
            ),
            Err(e) => return fail(AdaptubeStatus::Failed, e.to_string()),
        };
        *out = Box::into_raw(Box::new(AdaptubeTrace { inner: trace }));
        status
    })
}

/// Number of logged steps.
///
/// # Safety
/// `trace` must be null or come from [`adaptube_run`].
#[no_mangle]
pub unsafe extern "C" fn adaptube_trace_len(trace: *const AdaptubeTrace) -> usize {
    if trace.is_null() {
        return 0;
    }
    (*trace).inner.steps()
}

/// Cumulative stage cost over the logged steps.
///
/// # Safety
/// `trace` must be null or come from [`adaptube_run`].
#[no_mangle]
pub unsafe extern "C" fn adaptube_trace_total_cost(trace: *const AdaptubeTrace) -> f64 {
    if trace.is_null() {
        return f64::NAN;
    }
    (*trace).inner.total_cost()
}

/// Copies state `x_t` (`t` up to the trace length inclusive) into `out`.
///
/// # Safety
/// `trace` must come from [`adaptube_run`]; `out` writable for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptube_trace_state(
    trace: *const AdaptubeTrace,
    t: usize,
    out: *mut f64,
    n: usize,
) -> AdaptubeStatus {
    if trace.is_null() || out.is_null() {
        return fail(AdaptubeStatus::NullPointer, "null argument");
    }
    let tr = &*trace;
    let Some(x) = tr.inner.states.get(t) else {
        return fail(AdaptubeStatus::InvalidArgument, format!("no state at t={t}"));
    };
    if x.len() != n {
        return fail(
            AdaptubeStatus::DimensionMismatch,
            format!("state has {} entries", x.len()),
        );
    }
    std::slice::from_raw_parts_mut(out, n).copy_from_slice(x.as_slice());
    AdaptubeStatus::Ok
}

/// Copies input `u_t` into `out`.
///
/// # Safety
/// `trace` must come from [`adaptube_run`]; `out` writable for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptube_trace_input(
    trace: *const AdaptubeTrace,
    t: usize,
    out: *mut f64,
    m: usize,
) -> AdaptubeStatus {
    if trace.is_null() || out.is_null() {
        return fail(AdaptubeStatus::NullPointer, "null argument");
    }
    let tr = &*trace;
    let Some(r) = tr.inner.records.get(t) else {
        return fail(AdaptubeStatus::InvalidArgument, format!("no input at t={t}"));
    };
    if r.u.len() != m {
        return fail(
            AdaptubeStatus::DimensionMismatch,
            format!("input has {} entries", r.u.len()),
        );
    }
    std::slice::from_raw_parts_mut(out, m).copy_from_slice(&r.u);
    AdaptubeStatus::Ok
}

/// # Safety
/// `trace` must be null or come from [`adaptube_run`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptube_trace_free(trace: *mut AdaptubeTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
