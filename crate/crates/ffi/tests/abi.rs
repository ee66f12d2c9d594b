use std::ffi::{CStr, CString};
use std::ptr;

use lasserre_ffi::*;

const INTERVAL: &str = "vars: x1\nminimize: -x1^2\nsubject_to:\n 1 - x1^2 >= 0\n";

fn last_error() -> String {
    let p = lasserre_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn parse(text: &str) -> Result<*mut LasserreProblem, (LasserreStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    match unsafe { lasserre_problem_parse(c.as_ptr(), &mut out) } {
        LasserreStatus::Ok => Ok(out),
        s => Err((s, last_error())),
    }
}

fn run(problem: *const LasserreProblem, opts: Option<LasserreOptions>) -> *mut LasserreRun {
    let mut out = ptr::null_mut();
    let opts_ptr = opts.as_ref().map_or(ptr::null(), |o| o as *const _);
    let status = unsafe { lasserre_run(problem, opts_ptr, &mut out) };
    assert_eq!(status, LasserreStatus::Ok, "{}", last_error());
    out
}

#[test]
fn interval_round_trip_through_the_abi() {
    let p = parse(INTERVAL).unwrap();
    assert_eq!(unsafe { lasserre_problem_nvars(p) }, 1);
    let r = run(p, None);
    let mut outcome = LasserreOutcome::SolverFailed;
    assert_eq!(
        unsafe { lasserre_run_outcome(r, &mut outcome) },
        LasserreStatus::Ok
    );
    assert_eq!(outcome, LasserreOutcome::Certified);

    let (mut f, mut k) = (0.0, 0u32);
    assert_eq!(
        unsafe { lasserre_run_minimum(r, &mut f, &mut k) },
        LasserreStatus::Ok
    );
    assert!((f + 1.0).abs() < 1e-6);
    assert_eq!(k, 2);

    assert_eq!(unsafe { lasserre_run_atom_count(r) }, 2);
    let mut xs = Vec::new();
    let mut total = 0.0;
    for i in 0..2 {
        let (mut x, mut w) = (0.0, 0.0);
        let s = unsafe { lasserre_run_atom(r, i, &mut x, 1, &mut w) };
        assert_eq!(s, LasserreStatus::Ok);
        xs.push(x);
        total += w;
    }
    xs.sort_by(f64::total_cmp);
    assert!((xs[0] + 1.0).abs() < 1e-5 && (xs[1] - 1.0).abs() < 1e-5);
    assert!((total - 1.0).abs() < 1e-9);

    let mut x = 0.0;
    let s = unsafe { lasserre_run_atom(r, 2, &mut x, 1, ptr::null_mut()) };
    assert_eq!(s, LasserreStatus::OutOfRange);
    let s = unsafe { lasserre_run_atom(r, 0, &mut x, 0, ptr::null_mut()) };
    assert_eq!(s, LasserreStatus::OutOfRange);

    let json = unsafe { lasserre_run_json(r) };
    assert!(!json.is_null());
    let doc: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(doc["status"], "certified");
    assert_eq!(doc["certificate"]["atoms"].as_array().unwrap().len(), 2);
    unsafe {
        lasserre_string_free(json);
        lasserre_run_free(r);
        lasserre_problem_free(p);
    }
}

#[test]
fn options_select_order_range_and_flavor() {
    let p = parse(INTERVAL).unwrap();
    let mut opts = LasserreOptions::default();
    assert_eq!(
        unsafe { lasserre_options_default(&mut opts) },
        LasserreStatus::Ok
    );
    assert_eq!(opts.flavor, LasserreFlavor::Putinar);
    opts.order_max = 1;
    let r = run(p, Some(opts));
    let mut outcome = LasserreOutcome::Certified;
    unsafe { lasserre_run_outcome(r, &mut outcome) };
    assert_eq!(outcome, LasserreOutcome::Exhausted);
    assert_eq!(unsafe { lasserre_run_atom_count(r) }, 0);
    let s = unsafe { lasserre_run_minimum(r, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, LasserreStatus::NotCertified);

    opts.order_max = 0;
    opts.flavor = LasserreFlavor::Gradient;
    let mut out = ptr::null_mut();
    let s = unsafe { lasserre_run(p, &opts, &mut out) };
    assert_eq!(s, LasserreStatus::Unsupported);
    assert!(out.is_null());
    assert!(last_error().contains("gradient"));
    unsafe {
        lasserre_run_free(r);
        lasserre_problem_free(p);
    }
}

#[test]
fn parse_errors_carry_position() {
    let (status, msg) = parse("vars: x1, x2\nminimize: x1 + x3\n").unwrap_err();
    assert_eq!(status, LasserreStatus::Parse);
    assert!(msg.starts_with("2:16:") && msg.contains("x3"), "{msg}");

    let bad = [b'v', 0xff, 0];
    let mut out = ptr::null_mut();
    let s = unsafe { lasserre_problem_parse(bad.as_ptr().cast(), &mut out) };
    assert_eq!(s, LasserreStatus::InvalidUtf8);
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { lasserre_problem_parse(ptr::null(), &mut out) },
        LasserreStatus::NullPointer
    );
    assert_eq!(
        unsafe { lasserre_run(ptr::null(), ptr::null(), ptr::null_mut()) },
        LasserreStatus::NullPointer
    );
    assert_eq!(
        unsafe { lasserre_options_default(ptr::null_mut()) },
        LasserreStatus::NullPointer
    );
    assert_eq!(unsafe { lasserre_problem_nvars(ptr::null()) }, 0);
    assert_eq!(unsafe { lasserre_run_atom_count(ptr::null()) }, 0);
    assert!(unsafe { lasserre_run_json(ptr::null()) }.is_null());
    unsafe {
        lasserre_problem_free(ptr::null_mut());
        lasserre_run_free(ptr::null_mut());
        lasserre_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    let _ = parse("vars: x1\n");
    let here = last_error();
    std::thread::spawn(|| assert!(lasserre_last_error_message().is_null()))
        .join()
        .unwrap();
    assert_eq!(last_error(), here);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(lasserre_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
