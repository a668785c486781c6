//! C ABI for `dsrc-ctl`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_run` functions and released by the matching `*_free`. Every fallible
//! call returns a [`DsrcStatus`]; on failure the message is available from
//! [`dsrc_last_error`] on the same thread. Panics are caught at the boundary
//! and reported as [`DsrcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dsrc_ctl::io::emit;
use dsrc_ctl::power_control::{optimal_cut, CutScores};
use dsrc_ctl::{Algo, Config, Error, RunRecord, Simulation};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsrcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid configuration or out-of-domain input.
    Config = 3,
    /// The load target cannot be met.
    Infeasible = 4,
    /// A file could not be read or written.
    Io = 5,
    /// A caller-provided buffer is too small.
    BufferTooSmall = 6,
    /// The library panicked; the handle arguments remain valid.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsrcAlgo {
    Rate = 0,
    Power = 1,
    Joint = 2,
    Limeric = 3,
}

impl From<DsrcAlgo> for Algo {
    fn from(a: DsrcAlgo) -> Self {
        match a {
            DsrcAlgo::Rate => Algo::Rate,
            DsrcAlgo::Power => Algo::Power,
            DsrcAlgo::Joint => Algo::Joint,
            DsrcAlgo::Limeric => Algo::Limeric,
        }
    }
}

/// A configured scenario: positions, link thresholds and utilities.
pub struct DsrcSimulation(Simulation);

/// The record of one controller run.
pub struct DsrcRun(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DsrcStatus, msg: impl Into<String>) -> DsrcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DsrcStatus {
    let status = match e {
        Error::Infeasible(_) => DsrcStatus::Infeasible,
        Error::Io { .. } => DsrcStatus::Io,
        Error::Config(_) | Error::Domain(_) | Error::Json { .. } => DsrcStatus::Config,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into [`DsrcStatus::Panic`].
fn guard(f: impl FnOnce() -> DsrcStatus) -> DsrcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DsrcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, DsrcStatus> {
    if s.is_null() {
        return Err(fail(DsrcStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(DsrcStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $name:literal) => {
        if $p.is_null() {
            return fail(DsrcStatus::NullArgument, concat!($name, " is null"));
        }
    };
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn dsrc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's most recent error message, or null if none.
/// Release with [`dsrc_string_free`].
#[no_mangle]
pub extern "C" fn dsrc_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dsrc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a simulation from a JSON configuration. `seed` overrides the
/// configured scenario seed when `use_seed` is true.
///
/// # Safety
/// `config_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_new(
    config_json: *const c_char,
    use_seed: bool,
    seed: u64,
    out: *mut *mut DsrcSimulation,
) -> DsrcStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        let text = try_status!(str_arg(config_json, "config_json"));
        let cfg: Config = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(DsrcStatus::Config, format!("config: {e}")),
        };
        let sim = try_status!(Simulation::new(cfg, use_seed.then_some(seed)).map_err(from_error));
        *out = Box::into_raw(Box::new(DsrcSimulation(sim)));
        DsrcStatus::Ok
    })
}

/// Releases a simulation. Null is ignored.
///
/// # Safety
/// `sim` must come from [`dsrc_simulation_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_free(sim: *mut DsrcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of vehicles, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_vehicle_count(sim: *const DsrcSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.0.scenario.len())
}

/// Load target in msg/s, or NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_gamma(sim: *const DsrcSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.0.gamma)
}

/// Runs one controller to completion.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_run(
    sim: *const DsrcSimulation,
    algo: DsrcAlgo,
    out: *mut *mut DsrcRun,
) -> DsrcStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        non_null!(sim, "sim");
        let rec = try_status!((*sim).0.run(algo.into()).map_err(from_error));
        *out = Box::into_raw(Box::new(DsrcRun(rec)));
        DsrcStatus::Ok
    })
}

/// Writes the run's CSV and JSON outputs into `out_dir`.
///
/// # Safety
/// `sim` and `run` must be live handles; `out_dir` a nul-terminated path.
#[no_mangle]
pub unsafe extern "C" fn dsrc_simulation_emit(
    sim: *const DsrcSimulation,
    run: *const DsrcRun,
    out_dir: *const c_char,
) -> DsrcStatus {
    guard(|| {
        non_null!(sim, "sim");
        non_null!(run, "run");
        let dir = try_status!(str_arg(out_dir, "out_dir"));
        try_status!(emit(&(*run).0, Some(&(*sim).0.graph), Path::new(dir)).map_err(from_error));
        DsrcStatus::Ok
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`dsrc_simulation_run`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_free(run: *mut DsrcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded rounds, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_rounds(run: *const DsrcRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.rounds())
}

/// Mean objective over the final half of the run, or NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_rho_avg(run: *const DsrcRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.0.rho_avg())
}

/// Largest tail-averaged channel load as a fraction of airtime, or NaN for a
/// null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_max_load_frac(run: *const DsrcRun) -> f64 {
    run.as_ref()
        .map_or(f64::NAN, |r| r.0.max_tail_load() * r.0.airtime_s)
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> DsrcStatus {
    non_null!(buf, "buf");
    if len < src.len() {
        return fail(
            DsrcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    DsrcStatus::Ok
}

/// Copies the final rates (msg/s) into `buf`, which must hold one value per
/// vehicle.
///
/// # Safety
/// `run` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_final_rates(run: *const DsrcRun, buf: *mut f64, len: usize) -> DsrcStatus {
    guard(|| {
        non_null!(run, "run");
        copy_out(&(*run).0.final_state.mu, buf, len)
    })
}

/// Copies the final powers (dBm) into `buf`, which must hold one value per
/// vehicle.
///
/// # Safety
/// `run` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_final_powers(run: *const DsrcRun, buf: *mut f64, len: usize) -> DsrcStatus {
    guard(|| {
        non_null!(run, "run");
        copy_out(&(*run).0.final_state.p, buf, len)
    })
}

/// The whole run record as JSON. Release with [`dsrc_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsrc_run_to_json(run: *const DsrcRun, out: *mut *mut c_char) -> DsrcStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        non_null!(run, "run");
        let text = match serde_json::to_string(&(*run).0) {
            Ok(t) => t,
            Err(e) => return fail(DsrcStatus::Config, format!("serialize run: {e}")),
        };
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        DsrcStatus::Ok
    })
}

/// Solves one cut subproblem: the largest `g` whose every trailing sum of
/// `f[0..g]` is positive, or 0.
///
/// # Safety
/// `f` must be valid for `len` reads (or null with `len == 0`); `out_cut`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsrc_optimal_cut(f: *const f64, len: usize, out_cut: *mut usize) -> DsrcStatus {
    guard(|| {
        non_null!(out_cut, "out_cut");
        let scores = if len == 0 {
            Vec::new()
        } else {
            non_null!(f, "f");
            std::slice::from_raw_parts(f, len).to_vec()
        };
        if scores.iter().any(|x| !x.is_finite()) {
            return fail(DsrcStatus::Config, "scores must be finite");
        }
        *out_cut = optimal_cut(&CutScores::new(scores));
        DsrcStatus::Ok
    })
}
