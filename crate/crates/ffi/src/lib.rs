//! C interface to the cwhfmt planner.
//!
//! Scenarios, precomputed data and plans are opaque heap handles created by
//! `cwh_*_load`/`cwh_precompute`/`cwh_plan` and released by the matching
//! `cwh_*_free`. Every fallible call returns a [`CwhStatus`]; on failure a
//! description is available from [`cwh_last_error_message`] on the same
//! thread until the next failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::Vector3;

use cwhfmt::cwh::{propagate_coast, OrbitModel, State};
use cwhfmt::planner::data::{DataError, PrecomputeError};
use cwhfmt::planner::{precompute, PrecomputedGraphData};
use cwhfmt::report::{report_json, run_online, write_outputs, OnlineRun};
use cwhfmt::scenario::{Scenario, ScenarioError};
use cwhfmt::steering::{solve_2pbvp, SteeringLimits};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CwhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    SamplingExhausted = 5,
    DataMismatch = 6,
    NoSolution = 7,
    PlanFailed = 8,
    Panic = 9,
}

/// Parsed and validated scenario.
pub struct CwhScenario {
    inner: Scenario,
}

/// Precomputed samples, neighbour sets and certificates.
pub struct CwhData {
    inner: PrecomputedGraphData,
}

/// Result of one online planning run.
pub struct CwhPlan {
    inner: OnlineRun,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

type Failure = (CwhStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CwhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CwhStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CwhStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err((CwhStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CwhStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn scenario_failure(e: ScenarioError) -> Failure {
    let status = match e {
        ScenarioError::Io(_) => CwhStatus::IoError,
        ScenarioError::Parse(_) => CwhStatus::ParseError,
        ScenarioError::Invalid { .. } => CwhStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn data_failure(e: DataError) -> Failure {
    let status = match e {
        DataError::Io(_) => CwhStatus::IoError,
        DataError::FingerprintMismatch { .. } => CwhStatus::DataMismatch,
        _ => CwhStatus::ParseError,
    };
    (status, e.to_string())
}

fn model(omega: f64) -> Result<OrbitModel, Failure> {
    OrbitModel::new(omega).ok_or((CwhStatus::InvalidArgument, "omega must be positive and finite".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cwh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cwh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Coasts the state `x0` (position [m] then velocity [m/s]) for `t` seconds
/// under mean motion `omega` [rad/s] and writes the result to `out`.
///
/// # Safety
/// `x0` must point to 6 readable doubles and `out` to 6 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cwh_propagate_coast(omega: f64, x0: *const f64, t: f64, out: *mut f64) -> CwhStatus {
    guard(|| {
        non_null(x0, "x0")?;
        non_null(out, "out")?;
        let m = model(omega)?;
        if !t.is_finite() {
            return Err((CwhStatus::InvalidArgument, "t must be finite".into()));
        }
        let x = State::from_array(std::slice::from_raw_parts(x0, 6).try_into().unwrap());
        let y = propagate_coast(&m, &x, t).to_array();
        std::slice::from_raw_parts_mut(out, 6).copy_from_slice(&y);
        Ok(())
    })
}

/// Minimum-fuel two-impulse transfer from `x0` to `xf` with duration at
/// most `t_max` seconds. Writes the departure and arrival impulses, the
/// duration and the cost `|dv1| + |dv2|`.
///
/// # Safety
/// `x0` and `xf` must point to 6 readable doubles, `dv1` and `dv2` to 3
/// writable doubles and `duration`, `cost` to writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cwh_solve_2pbvp(
    omega: f64,
    x0: *const f64,
    xf: *const f64,
    t_max: f64,
    dv1: *mut f64,
    dv2: *mut f64,
    duration: *mut f64,
    cost: *mut f64,
) -> CwhStatus {
    guard(|| {
        for (p, name) in [(x0, "x0"), (xf, "xf")] {
            non_null(p, name)?;
        }
        for (p, name) in [(dv1, "dv1"), (dv2, "dv2"), (duration, "duration"), (cost, "cost")] {
            non_null(p, name)?;
        }
        let m = model(omega)?;
        let a = State::from_array(std::slice::from_raw_parts(x0, 6).try_into().unwrap());
        let b = State::from_array(std::slice::from_raw_parts(xf, 6).try_into().unwrap());
        let limits = SteeringLimits::with_t_max(t_max);
        let sol = solve_2pbvp(&m, &a, &b, &limits).map_err(|e| {
            let status = match e {
                cwhfmt::steering::SteeringError::InvalidLimits(_) => CwhStatus::InvalidArgument,
                _ => CwhStatus::NoSolution,
            };
            (status, e.to_string())
        })?;
        let put = |dst: *mut f64, v: &Vector3<f64>| std::slice::from_raw_parts_mut(dst, 3).copy_from_slice(v.as_slice());
        put(dv1, &sol.dv1);
        put(dv2, &sol.dv2);
        *duration = sol.duration;
        *cost = sol.cost;
        Ok(())
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_scenario_load(path: *const c_char, out: *mut *mut CwhScenario) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = path_arg(path, "path")?;
        let inner = Scenario::from_path(Path::new(p)).map_err(scenario_failure)?;
        *out = Box::into_raw(Box::new(CwhScenario { inner }));
        Ok(())
    })
}

/// Parses and validates a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_scenario_from_toml(text: *const c_char, out: *mut *mut CwhScenario) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let t = path_arg(text, "text")?;
        let inner = Scenario::from_toml_str(t).map_err(scenario_failure)?;
        *out = Box::into_raw(Box::new(CwhScenario { inner }));
        Ok(())
    })
}

/// Releases a scenario; NULL is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cwh_scenario_free(scenario: *mut CwhScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the offline phase for `scenario`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_precompute(scenario: *const CwhScenario, out: *mut *mut CwhData) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(scenario, "scenario")?;
        let inner = precompute(&(*scenario).inner).map_err(|e| match e {
            PrecomputeError::Sampling { .. } => (CwhStatus::SamplingExhausted, e.to_string()),
        })?;
        *out = Box::into_raw(Box::new(CwhData { inner }));
        Ok(())
    })
}

/// Loads a data file and checks that it belongs to `scenario`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `scenario` a live handle and
/// `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_data_load(
    path: *const c_char,
    scenario: *const CwhScenario,
    out: *mut *mut CwhData,
) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(scenario, "scenario")?;
        let p = path_arg(path, "path")?;
        let inner = PrecomputedGraphData::load_for(Path::new(p), &(*scenario).inner).map_err(data_failure)?;
        *out = Box::into_raw(Box::new(CwhData { inner }));
        Ok(())
    })
}

/// Writes `data` to `path` in the binary format.
///
/// # Safety
/// `data` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cwh_data_save(data: *const CwhData, path: *const c_char) -> CwhStatus {
    guard(|| {
        non_null(data, "data")?;
        let p = path_arg(path, "path")?;
        (*data).inner.save(Path::new(p)).map_err(data_failure)
    })
}

/// Total number of stored samples over all legs.
///
/// # Safety
/// `data` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn cwh_data_sample_count(data: *const CwhData) -> usize {
    if data.is_null() {
        return 0;
    }
    (*data).inner.summary().samples
}

/// Releases precomputed data; NULL is ignored.
///
/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cwh_data_free(data: *mut CwhData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs the online phase. A plan handle is returned in `out` both on
/// success and on `CWH_STATUS_PLAN_FAILED`, so that the failure report can
/// be read; it must be freed in both cases.
///
/// # Safety
/// `scenario` and `data` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan(
    scenario: *const CwhScenario,
    data: *const CwhData,
    smooth: bool,
    out: *mut *mut CwhPlan,
) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(scenario, "scenario")?;
        non_null(data, "data")?;
        let s = &(*scenario).inner;
        let d = &(*data).inner;
        d.check_fingerprint(s).map_err(data_failure)?;
        let run = run_online(s, d, smooth && s.smoothing.enabled);
        let failed = !run.succeeded();
        let message = run.report.message.clone().unwrap_or_default();
        *out = Box::into_raw(Box::new(CwhPlan { inner: run }));
        if failed {
            Err((CwhStatus::PlanFailed, message))
        } else {
            Ok(())
        }
    })
}

/// Total two-norm cost [m/s] of a successful plan.
///
/// # Safety
/// `plan` must be a live handle and `cost` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_cost(plan: *const CwhPlan, cost: *mut f64) -> CwhStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(cost, "cost")?;
        let c = (*plan)
            .inner
            .report
            .total_cost_mps
            .ok_or((CwhStatus::PlanFailed, "plan has no solution".to_string()))?;
        *cost = c;
        Ok(())
    })
}

/// Number of burns of the plan; 0 for a failed plan or NULL.
///
/// # Safety
/// `plan` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_burn_count(plan: *const CwhPlan) -> usize {
    if plan.is_null() {
        return 0;
    }
    (*plan).inner.plan.as_ref().map_or(0, |p| p.burns.len())
}

/// Time [s] and impulse [m/s] of burn `index`.
///
/// # Safety
/// `plan` must be a live handle, `tau` writable and `dv` 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_burn(plan: *const CwhPlan, index: usize, tau: *mut f64, dv: *mut f64) -> CwhStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(tau, "tau")?;
        non_null(dv, "dv")?;
        let burns = (*plan).inner.plan.as_ref().map_or(&[][..], |p| &p.burns[..]);
        let b = burns
            .get(index)
            .ok_or((CwhStatus::InvalidArgument, format!("burn index {index} out of range")))?;
        *tau = b.impulse.tau;
        std::slice::from_raw_parts_mut(dv, 3).copy_from_slice(b.impulse.dv.as_slice());
        Ok(())
    })
}

/// Run report as JSON. The string must be released with
/// [`cwh_string_free`].
///
/// # Safety
/// `plan` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_report_json(plan: *const CwhPlan, out: *mut *mut c_char) -> CwhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(plan, "plan")?;
        let text = CString::new(report_json(&(*plan).inner.report))
            .map_err(|_| (CwhStatus::InvalidArgument, "report contains NUL".to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// Writes the trajectory, burns, report, abort-plan and timing files under
/// `prefix`, as the command-line tool does.
///
/// # Safety
/// `scenario` and `plan` must be live handles and `prefix` a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_write(
    scenario: *const CwhScenario,
    plan: *const CwhPlan,
    prefix: *const c_char,
) -> CwhStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        non_null(plan, "plan")?;
        let p = path_arg(prefix, "prefix")?;
        write_outputs(&(*scenario).inner, &(*plan).inner, Path::new(p)).map_err(|e| (CwhStatus::IoError, e.to_string()))
    })
}

/// Releases a plan; NULL is ignored.
///
/// # Safety
/// `plan` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cwh_plan_free(plan: *mut CwhPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Releases a string returned by this library; NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cwh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
