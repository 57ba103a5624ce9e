//! C interface to the treechild solver.
//!
//! Objects cross the boundary as opaque pointers that the caller releases with the matching
//! `*_free` function. Every fallible call returns a [`TcStatus`]; on failure a message is
//! available from [`tc_last_error`] until the next call on the same thread. Strings returned by
//! the library are released with [`tc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use treechild::gen::{generate_instance, instance_text, GenParams};
use treechild::newick::{parse_instance, write_network};
use treechild::search::{solve, Solution, SolveError, SolveOptions};
use treechild::Instance;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NoSolution = 1,
    InputError = 2,
    TimeLimit = 3,
    NullPointer = 4,
    Panic = 5,
}

/// A parsed set of trees.
pub struct TcInstance {
    inner: Instance,
}

/// A solved instance: weight, sequence and network.
pub struct TcSolution {
    inner: Solution,
    sequence: CString,
    network: CString,
}

/// Solver settings. `max_k < 0` and `time_limit_secs < 0` mean no limit.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TcSolveOptions {
    pub max_k: i64,
    pub use_rbe: bool,
    pub use_clusters: bool,
    pub workers: u32,
    pub poll_interval: u64,
    pub time_limit_secs: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap());
}

fn guard(f: impl FnOnce() -> Result<(), (TcStatus, String)>) -> TcStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside treechild");
            TcStatus::Panic
        }
    }
}

fn null() -> (TcStatus, String) {
    (TcStatus::NullPointer, "null pointer argument".into())
}

fn to_c(s: String) -> CString {
    CString::new(s).expect("no interior nul")
}

//--------------------------------------------------------------------------------------------------
// Errors and strings
//--------------------------------------------------------------------------------------------------

/// The message of the last failed call on this thread, or an empty string.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The library version as a static string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

//--------------------------------------------------------------------------------------------------
// Instances
//--------------------------------------------------------------------------------------------------

/// Parse Newick trees, separated by `;`, into a new instance.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tc_instance_parse(text: *const c_char, out: *mut *mut TcInstance) -> TcStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (TcStatus::InputError, format!("input is not UTF-8: {e}")))?;
        let inner = parse_instance(text).map_err(|e| (TcStatus::InputError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TcInstance { inner }));
        Ok(())
    })
}

/// # Safety
/// `inst` must come from [`tc_instance_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tc_instance_free(inst: *mut TcInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of taxa, or 0 for null.
///
/// # Safety
/// `inst` must be a live instance or null.
#[no_mangle]
pub unsafe extern "C" fn tc_instance_num_taxa(inst: *const TcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.num_taxa())
}

/// Number of trees, or 0 for null.
///
/// # Safety
/// `inst` must be a live instance or null.
#[no_mangle]
pub unsafe extern "C" fn tc_instance_num_trees(inst: *const TcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.num_trees())
}

//--------------------------------------------------------------------------------------------------
// Solving
//--------------------------------------------------------------------------------------------------

#[no_mangle]
pub extern "C" fn tc_options_default() -> TcSolveOptions {
    let d = SolveOptions::default();
    TcSolveOptions {
        max_k: -1,
        use_rbe: d.use_rbe,
        use_clusters: d.use_clusters,
        workers: d.workers as u32,
        poll_interval: d.poll_interval,
        time_limit_secs: -1.0,
    }
}

fn convert(o: &TcSolveOptions) -> Result<SolveOptions, (TcStatus, String)> {
    let bad = |m: &str| (TcStatus::InputError, m.to_string());
    if o.workers == 0 {
        return Err(bad("workers must be at least 1"));
    }
    if o.poll_interval == 0 {
        return Err(bad("poll_interval must be at least 1"));
    }
    let time_limit = if o.time_limit_secs.is_nan() {
        return Err(bad("time_limit_secs is NaN"));
    } else if o.time_limit_secs < 0.0 {
        None
    } else {
        Some(Duration::try_from_secs_f64(o.time_limit_secs).map_err(|e| bad(&e.to_string()))?)
    };
    Ok(SolveOptions {
        max_k: u32::try_from(o.max_k).ok(),
        use_rbe: o.use_rbe,
        use_clusters: o.use_clusters,
        workers: o.workers as usize,
        poll_interval: o.poll_interval,
        time_limit,
        ..SolveOptions::default()
    })
}

/// Solve `inst`. `opts` may be null for the defaults.
///
/// # Safety
/// `inst` must be a live instance, `opts` null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tc_solve(
    inst: *const TcInstance,
    opts: *const TcSolveOptions,
    out: *mut *mut TcSolution,
) -> TcStatus {
    guard(|| {
        if inst.is_null() || out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let inst = &(*inst).inner;
        let opts = convert(&opts.as_ref().copied().unwrap_or_else(|| tc_options_default()))?;
        let inner = solve(inst, &opts).map_err(|e| {
            let status = match e {
                SolveError::NoSolution(_) | SolveError::Internal(_) => TcStatus::NoSolution,
                SolveError::TimeLimit => TcStatus::TimeLimit,
            };
            (status, e.to_string())
        })?;
        let sequence = to_c(inner.sequence.to_lines(&inst.taxa).join("\n"));
        let network = to_c(write_network(&inner.network, &inst.taxa));
        *out = Box::into_raw(Box::new(TcSolution { inner, sequence, network }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`tc_solve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tc_solution_free(sol: *mut TcSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Weight of the sequence, equal to the reticulation number of the network; -1 for null.
///
/// # Safety
/// `sol` must be a live solution or null.
#[no_mangle]
pub unsafe extern "C" fn tc_solution_weight(sol: *const TcSolution) -> i64 {
    sol.as_ref().map_or(-1, |s| s.inner.weight)
}

/// The sequence, one `(x,y)` per line, owned by `sol`.
///
/// # Safety
/// `sol` must be a live solution or null. The string lives as long as `sol`.
#[no_mangle]
pub unsafe extern "C" fn tc_solution_sequence(sol: *const TcSolution) -> *const c_char {
    sol.as_ref().map_or(ptr::null(), |s| s.sequence.as_ptr())
}

/// The network in extended Newick, owned by `sol`.
///
/// # Safety
/// `sol` must be a live solution or null. The string lives as long as `sol`.
#[no_mangle]
pub unsafe extern "C" fn tc_solution_network(sol: *const TcSolution) -> *const c_char {
    sol.as_ref().map_or(ptr::null(), |s| s.network.as_ptr())
}

/// Number of search nodes visited while solving; 0 for null.
///
/// # Safety
/// `sol` must be a live solution or null.
#[no_mangle]
pub unsafe extern "C" fn tc_solution_recursive_calls(sol: *const TcSolution) -> u64 {
    sol.as_ref().map_or(0, |s| s.inner.stats.recursive_calls)
}

//--------------------------------------------------------------------------------------------------
// Generation
//--------------------------------------------------------------------------------------------------

/// Generate a random instance as Newick text followed by the generator comment line. The caller
/// frees `*out` with [`tc_string_free`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tc_generate(n: u32, k: u32, t: u32, seed: u64, out: *mut *mut c_char) -> TcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let params = GenParams { n: n as usize, k: k as usize, t: t as usize, seed };
        let (inst, net) = generate_instance(&params).map_err(|e| (TcStatus::InputError, e.to_string()))?;
        *out = to_c(instance_text(&inst, net.reticulation_number())).into_raw();
        Ok(())
    })
}
