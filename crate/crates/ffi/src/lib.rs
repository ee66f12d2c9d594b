//! C ABI over the `lasserre` crate.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns a [`LasserreStatus`]; on failure the
//! message is available from [`lasserre_last_error_message`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Instant;

use lasserre::cli::{result_document, ExitStatus};
use lasserre::driver::{run_hierarchy, HierarchyOptions, HierarchyRun, Outcome};
use lasserre::problem_file::{parse_problem_file, ProblemFile};
use lasserre::relaxation::Flavor;
use lasserre::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LasserreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Domain = 4,
    Unsupported = 5,
    Numerical = 6,
    /// Index past the end, or a buffer too short.
    OutOfRange = 7,
    /// The run has no certificate.
    NotCertified = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LasserreFlavor {
    Putinar = 0,
    Schmudgen = 1,
    Sos = 2,
    Gradient = 3,
    Jacobian = 4,
}

impl From<LasserreFlavor> for Flavor {
    fn from(f: LasserreFlavor) -> Self {
        match f {
            LasserreFlavor::Putinar => Flavor::Putinar,
            LasserreFlavor::Schmudgen => Flavor::Schmudgen,
            LasserreFlavor::Sos => Flavor::SosUnconstrained,
            LasserreFlavor::Gradient => Flavor::Gradient,
            LasserreFlavor::Jacobian => Flavor::JacobianSingle,
        }
    }
}

/// Values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LasserreOutcome {
    Certified = 0,
    Exhausted = 2,
    SolverFailed = 3,
}

/// Orders of 0 select the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LasserreOptions {
    pub flavor: LasserreFlavor,
    pub order_min: u32,
    pub order_max: u32,
    pub rank_tol: f64,
    pub solver_tol: f64,
    pub seed: u64,
}

impl Default for LasserreOptions {
    fn default() -> Self {
        let d = HierarchyOptions::default();
        LasserreOptions {
            flavor: LasserreFlavor::Putinar,
            order_min: 0,
            order_max: 0,
            rank_tol: d.rank_tol,
            solver_tol: d.solver_tol,
            seed: d.seed,
        }
    }
}

impl LasserreOptions {
    fn hierarchy(&self) -> HierarchyOptions {
        HierarchyOptions {
            k_min: (self.order_min > 0).then_some(self.order_min),
            k_max: (self.order_max > 0).then_some(self.order_max),
            rank_tol: self.rank_tol,
            solver_tol: self.solver_tol,
            seed: self.seed,
            ..HierarchyOptions::default()
        }
    }
}

/// A parsed problem file.
pub struct LasserreProblem {
    file: ProblemFile,
}

/// A finished hierarchy run.
pub struct LasserreRun {
    file: ProblemFile,
    run: HierarchyRun,
    seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: LasserreStatus, msg: impl Into<String>) -> LasserreStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> LasserreStatus {
    match e {
        Error::Parse { .. } => LasserreStatus::Parse,
        Error::Unsupported(_) => LasserreStatus::Unsupported,
        Error::Numerical(_) | Error::NotOptimal(_) | Error::ExtractionFailed(_) => {
            LasserreStatus::Numerical
        }
        _ => LasserreStatus::Domain,
    }
}

fn from_error(e: Error) -> LasserreStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `body`, turning a panic into [`LasserreStatus::Panic`].
fn guard(body: impl FnOnce() -> LasserreStatus) -> LasserreStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(LasserreStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lasserre_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn lasserre_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the default options into `out`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_options_default(out: *mut LasserreOptions) -> LasserreStatus {
    if out.is_null() {
        return fail(LasserreStatus::NullPointer, "options pointer is null");
    }
    // SAFETY: non-null and writable by contract.
    unsafe { out.write(LasserreOptions::default()) };
    LasserreStatus::Ok
}

/// Parses problem-file text. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_problem_parse(
    text: *const c_char,
    out: *mut *mut LasserreProblem,
) -> LasserreStatus {
    if text.is_null() || out.is_null() {
        return fail(
            LasserreStatus::NullPointer,
            "text or output pointer is null",
        );
    }
    guard(|| {
        // SAFETY: NUL-terminated by contract.
        let Ok(text) = unsafe { CStr::from_ptr(text) }.to_str() else {
            return fail(LasserreStatus::InvalidUtf8, "problem text is not UTF-8");
        };
        match parse_problem_file(text) {
            Ok(file) => {
                let handle = Box::into_raw(Box::new(LasserreProblem { file }));
                // SAFETY: writable by contract.
                unsafe { out.write(handle) };
                LasserreStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of variables, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lasserre_problem_nvars(problem: *const LasserreProblem) -> usize {
    // SAFETY: live or null by contract.
    unsafe { problem.as_ref() }.map_or(0, |p| p.file.problem.nvars())
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lasserre_problem_free(problem: *mut LasserreProblem) {
    if !problem.is_null() {
        // SAFETY: allocated by `lasserre_problem_parse`, freed once.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Runs the hierarchy. `options` may be null for defaults. On success
/// `*out` owns a new run handle whatever the outcome.
///
/// # Safety
/// `problem` must be a live handle; `options` null or valid for reads;
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run(
    problem: *const LasserreProblem,
    options: *const LasserreOptions,
    out: *mut *mut LasserreRun,
) -> LasserreStatus {
    // SAFETY: live or null by contract.
    let (Some(problem), false) = (unsafe { problem.as_ref() }, out.is_null()) else {
        return fail(
            LasserreStatus::NullPointer,
            "problem or output pointer is null",
        );
    };
    // SAFETY: readable or null by contract.
    let options = unsafe { options.as_ref() }.copied().unwrap_or_default();
    guard(|| {
        let clock = Instant::now();
        let result = problem
            .file
            .to_problem()
            .and_then(|p| run_hierarchy(&p, options.flavor.into(), &options.hierarchy()));
        match result {
            Ok(run) => {
                let handle = Box::into_raw(Box::new(LasserreRun {
                    file: problem.file.clone(),
                    run,
                    seconds: clock.elapsed().as_secs_f64(),
                }));
                // SAFETY: writable by contract.
                unsafe { out.write(handle) };
                LasserreStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_outcome(
    run: *const LasserreRun,
    out: *mut LasserreOutcome,
) -> LasserreStatus {
    // SAFETY: live or null by contract.
    let (Some(run), false) = (unsafe { run.as_ref() }, out.is_null()) else {
        return fail(LasserreStatus::NullPointer, "run or output pointer is null");
    };
    let outcome = match ExitStatus::of(&run.run.outcome) {
        ExitStatus::Certified => LasserreOutcome::Certified,
        ExitStatus::Exhausted => LasserreOutcome::Exhausted,
        _ => LasserreOutcome::SolverFailed,
    };
    // SAFETY: writable by contract.
    unsafe { out.write(outcome) };
    LasserreStatus::Ok
}

/// Certified minimum and the order that certified it.
///
/// # Safety
/// `run` must be null or a live handle; `f_min` and `order` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_minimum(
    run: *const LasserreRun,
    f_min: *mut f64,
    order: *mut u32,
) -> LasserreStatus {
    // SAFETY: live or null by contract.
    let Some(run) = (unsafe { run.as_ref() }) else {
        return fail(LasserreStatus::NullPointer, "run pointer is null");
    };
    let Outcome::Certified {
        f_min: f, order: k, ..
    } = run.run.outcome
    else {
        return fail(LasserreStatus::NotCertified, "run has no certificate");
    };
    // SAFETY: each is writable or null by contract.
    unsafe {
        if !f_min.is_null() {
            f_min.write(f);
        }
        if !order.is_null() {
            order.write(k);
        }
    }
    LasserreStatus::Ok
}

/// Number of certified atoms; 0 for null or uncertified runs.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_atom_count(run: *const LasserreRun) -> usize {
    // SAFETY: live or null by contract.
    unsafe { run.as_ref() }
        .and_then(|r| r.run.certified_measure())
        .map_or(0, |m| m.len())
}

/// Copies atom `index` into `coords[0..len]` and its weight into `weight`.
/// `len` must be at least the variable count.
///
/// # Safety
/// `run` must be null or a live handle; `coords` null or valid for `len`
/// writes; `weight` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_atom(
    run: *const LasserreRun,
    index: usize,
    coords: *mut f64,
    len: usize,
    weight: *mut f64,
) -> LasserreStatus {
    // SAFETY: live or null by contract.
    let Some(run) = (unsafe { run.as_ref() }) else {
        return fail(LasserreStatus::NullPointer, "run pointer is null");
    };
    let Some(measure) = run.run.certified_measure() else {
        return fail(LasserreStatus::NotCertified, "run has no certificate");
    };
    let Some(atom) = measure.atoms.get(index) else {
        return fail(
            LasserreStatus::OutOfRange,
            format!("atom {index} of {}", measure.len()),
        );
    };
    if coords.is_null() {
        return fail(LasserreStatus::NullPointer, "coordinate buffer is null");
    }
    if len < atom.len() {
        return fail(
            LasserreStatus::OutOfRange,
            format!("buffer holds {len} of {} coordinates", atom.len()),
        );
    }
    // SAFETY: `coords` has room for `len ≥ atom.len()` values by contract.
    unsafe {
        ptr::copy_nonoverlapping(atom.as_ptr(), coords, atom.len());
        if !weight.is_null() {
            weight.write(measure.weights[index]);
        }
    }
    LasserreStatus::Ok
}

/// The result document as JSON; free with [`lasserre_string_free`].
/// Null on failure.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_json(run: *const LasserreRun) -> *mut c_char {
    // SAFETY: live or null by contract.
    let Some(run) = (unsafe { run.as_ref() }) else {
        set_error("run pointer is null");
        return ptr::null_mut();
    };
    let mut out = ptr::null_mut();
    guard(
        || match result_document(&run.file, &run.run, None, run.seconds) {
            Ok(doc) => match CString::new(doc.to_json()) {
                Ok(s) => {
                    out = s.into_raw();
                    LasserreStatus::Ok
                }
                Err(e) => fail(LasserreStatus::Domain, e.to_string()),
            },
            Err(e) => from_error(e),
        },
    );
    out
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lasserre_run_free(run: *mut LasserreRun) {
    if !run.is_null() {
        // SAFETY: allocated by `lasserre_run`, freed once.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lasserre_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by `CString::into_raw`, freed once.
        drop(unsafe { CString::from_raw(s) });
    }
}
