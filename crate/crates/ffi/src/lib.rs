//! C ABI over the `twohop` library.
//!
//! Scenarios and policy tables are opaque heap handles created by `*_new` /
//! `*_solve` functions and released with the matching `*_free`. Every other
//! function returns a [`TwohopStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`twohop_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twohop::analysis::{dvpub, exact_dvp_chain, wtb_min_s};
use twohop::dynamic::{value_iteration, PolicyTable};
use twohop::semistatic::{solve, SemiStaticMethod};
use twohop::sim::{simulate, SimSpec};
use twohop::{Error, QueueState, ScenarioConfig, Schedule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwohopStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Config = 3,
    MissingState = 4,
    CapExceeded = 5,
    Infeasible = 6,
    Parse = 7,
    Io = 8,
    InvalidArgument = 9,
    Panic = 10,
}

/// Opaque scenario handle.
pub struct TwohopScenario {
    config: ScenarioConfig,
}

/// Opaque handle to a solved MDP policy table.
pub struct TwohopPolicyTable {
    table: PolicyTable,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwohopSimResult {
    pub dvp_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_departures: f64,
    pub replications: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TwohopStatus {
    match e {
        Error::Domain(_) => TwohopStatus::Domain,
        Error::Config(_) => TwohopStatus::Config,
        Error::MissingState { .. } => TwohopStatus::MissingState,
        Error::CapExceeded { .. } => TwohopStatus::CapExceeded,
        Error::Infeasible(_) => TwohopStatus::Infeasible,
        Error::Parse { .. } => TwohopStatus::Parse,
        Error::Io(_) => TwohopStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Status(TwohopStatus, &'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TwohopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TwohopStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            TwohopStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Status(TwohopStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Status(TwohopStatus::NullPointer, "null output pointer"))
}

unsafe fn schedule(scn: &TwohopScenario, n1: *const u32, len: usize) -> Result<Schedule, Fail> {
    if n1.is_null() {
        return Err(Fail::Status(TwohopStatus::NullPointer, "null schedule"));
    }
    let s = Schedule::new(scn.config.slots(), std::slice::from_raw_parts(n1, len).to_vec())?;
    s.check_against(&scn.config)?;
    Ok(s)
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn twohop_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a scenario. `pe` is the per-slot erasure probability.
///
/// # Safety
/// `out_handle` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn twohop_scenario_new(
    slots: u32,
    pe: f64,
    deadline: u32,
    batch: u32,
    x1: u32,
    x2: u32,
    out_handle: *mut *mut TwohopScenario,
) -> TwohopStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let config = ScenarioConfig::new(slots, pe, deadline, batch, x1, x2)?;
        *slot = Box::into_raw(Box::new(TwohopScenario { config }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`twohop_scenario_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn twohop_scenario_free(handle: *mut TwohopScenario) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Exact DVP of the schedule `n1[0..len]` (link-1 slots per frame).
///
/// # Safety
/// `n1` must point to `len` readable values; `out_dvp` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_exact_dvp(
    scenario: *const TwohopScenario,
    n1: *const u32,
    len: usize,
    out_dvp: *mut f64,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        let s = schedule(scn, n1, len)?;
        *out(out_dvp)? = exact_dvp_chain(&scn.config, &s)?.dvp;
        Ok(())
    })
}

/// Union bound on the DVP, unclamped.
///
/// # Safety
/// As for [`twohop_exact_dvp`].
#[no_mangle]
pub unsafe extern "C" fn twohop_dvpub(
    scenario: *const TwohopScenario,
    n1: *const u32,
    len: usize,
    out_bound: *mut f64,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        let s = schedule(scn, n1, len)?;
        *out(out_bound)? = dvpub(&scn.config, &s)?.dvp;
        Ok(())
    })
}

/// Chernoff bound minimised over its exponent; writes the exponent and the
/// bound.
///
/// # Safety
/// As for [`twohop_exact_dvp`]; both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_wtb_min(
    scenario: *const TwohopScenario,
    n1: *const u32,
    len: usize,
    out_s: *mut f64,
    out_bound: *mut f64,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        let s = schedule(scn, n1, len)?;
        let (param, v) = wtb_min_s(&scn.config, &s)?;
        *out(out_s)? = param.value();
        *out(out_bound)? = v;
        Ok(())
    })
}

/// Runs a semi-static method by name (`wtb-r`, `wtb-w`, `wtb-d`, `e-wtb`,
/// `e-dvpub`, `opt`, `fifty`) and writes `w` link-1 allocations into
/// `out_n1`, whose capacity is `len`, plus the method's score.
///
/// # Safety
/// `method` must be a NUL-terminated string; `out_n1` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn twohop_solve_semistatic(
    scenario: *const TwohopScenario,
    method: *const c_char,
    out_n1: *mut u32,
    len: usize,
    out_score: *mut f64,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        if method.is_null() || out_n1.is_null() {
            return Err(Fail::Status(TwohopStatus::NullPointer, "null argument"));
        }
        let name = CStr::from_ptr(method)
            .to_str()
            .map_err(|_| Fail::Status(TwohopStatus::InvalidArgument, "method is not UTF-8"))?;
        let m = SemiStaticMethod::from_name(name)
            .ok_or(Fail::Status(TwohopStatus::InvalidArgument, "unknown semi-static method"))?;
        if len < scn.config.deadline() as usize {
            return Err(Fail::Status(TwohopStatus::InvalidArgument, "output buffer shorter than w"));
        }
        let score = out(out_score)?;
        let r = solve(&scn.config, m)?;
        ptr::copy_nonoverlapping(r.schedule.link1().as_ptr(), out_n1, r.schedule.len());
        *score = r.score;
        Ok(())
    })
}

/// Solves the throughput-maximising MDP for the scenario.
///
/// # Safety
/// `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_solve(
    scenario: *const TwohopScenario,
    out_handle: *mut *mut TwohopPolicyTable,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        let slot = out(out_handle)?;
        let table = value_iteration(&scn.config);
        *slot = Box::into_raw(Box::new(TwohopPolicyTable { table }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`twohop_policy_table_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_free(handle: *mut TwohopPolicyTable) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Link-1 slots the table assigns at `epoch` in state `(q1, q2)`.
///
/// # Safety
/// `table` must be a live handle; `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_action(
    table: *const TwohopPolicyTable,
    epoch: u32,
    q1: u32,
    q2: u32,
    out_action: *mut u32,
) -> TwohopStatus {
    guard(|| {
        let t = deref(table)?;
        let state = QueueState::new(q1, q2);
        let e = t.table.get(epoch, state).ok_or(Error::MissingState { epoch, state })?;
        *out(out_action)? = e.action;
        Ok(())
    })
}

/// Optimal expected departures from the initial state.
///
/// # Safety
/// `table` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_initial_value(
    table: *const TwohopPolicyTable,
    out_value: *mut f64,
) -> TwohopStatus {
    guard(|| {
        *out(out_value)? = deref(table)?.table.initial_value();
        Ok(())
    })
}

/// Exact DVP of the table's policy on its own scenario.
///
/// # Safety
/// `table` must be a live handle; `out_dvp` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_exact_dvp(
    table: *const TwohopPolicyTable,
    out_dvp: *mut f64,
) -> TwohopStatus {
    guard(|| {
        let t = deref(table)?;
        *out(out_dvp)? = exact_dvp_chain(t.table.config(), &t.table)?.dvp;
        Ok(())
    })
}

/// Monte Carlo estimate for a schedule. Deterministic in `seed`.
///
/// # Safety
/// As for [`twohop_exact_dvp`]; `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_simulate(
    scenario: *const TwohopScenario,
    n1: *const u32,
    len: usize,
    replications: u64,
    seed: u64,
    out_result: *mut TwohopSimResult,
) -> TwohopStatus {
    guard(|| {
        let scn = deref(scenario)?;
        let s = schedule(scn, n1, len)?;
        let slot = out(out_result)?;
        let r = simulate(&scn.config, &s, &SimSpec::new(replications, seed)?)?;
        *slot = TwohopSimResult {
            dvp_hat: r.dvp_hat,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            mean_departures: r.mean_departures,
            replications: r.replications,
        };
        Ok(())
    })
}

/// Monte Carlo estimate for a solved policy table.
///
/// # Safety
/// `table` must be a live handle; `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twohop_policy_table_simulate(
    table: *const TwohopPolicyTable,
    replications: u64,
    seed: u64,
    out_result: *mut TwohopSimResult,
) -> TwohopStatus {
    guard(|| {
        let t = deref(table)?;
        let slot = out(out_result)?;
        let r = simulate(t.table.config(), &t.table, &SimSpec::new(replications, seed)?)?;
        *slot = TwohopSimResult {
            dvp_hat: r.dvp_hat,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            mean_departures: r.mean_departures,
            replications: r.replications,
        };
        Ok(())
    })
}
