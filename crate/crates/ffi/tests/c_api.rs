use std::ffi::{CStr, CString};
use std::ptr;

use glidepath_ffi::*;

const PARAMS: &str = r#"{"mu":0.0874,"sigma":0.1453,"lambda":0.3483,"p_up":0.2273,
    "eta1":4.3578,"eta2":5.5079,"r":0.00623,"dt_months":1.0}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn params() -> *mut GpParams {
    let json = CString::new(PARAMS).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gp_params_from_json(json.as_ptr(), &mut out) }, GpStatus::Ok);
    assert!(!out.is_null());
    out
}

fn scenario(t: f64) -> *mut GpScenario {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gp_scenario_new(t, 10_000.0, 10_000.0, &mut out) }, GpStatus::Ok);
    out
}

#[test]
fn null_and_bad_input_report_status_and_message() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gp_params_from_json(ptr::null(), &mut out) }, GpStatus::NullPointer);
    assert!(!last_error().is_empty());

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { gp_params_from_json(bad.as_ptr(), &mut out) }, GpStatus::ParseError);

    let negative = CString::new(PARAMS.replace("0.1453", "-0.1")).unwrap();
    assert_ne!(unsafe { gp_params_from_json(negative.as_ptr(), &mut out) }, GpStatus::Ok);

    let mut s = ptr::null_mut();
    assert_ne!(unsafe { gp_scenario_new(0.0, 1.0, 1.0, &mut s) }, GpStatus::Ok);

    let missing = CString::new("/nonexistent/policy.json").unwrap();
    let mut pol = ptr::null_mut();
    assert_eq!(unsafe { gp_policy_load(missing.as_ptr(), &mut pol) }, GpStatus::IoError);

    let mut x = 0.0;
    assert_eq!(unsafe { gp_policy_target(ptr::null(), &mut x) }, GpStatus::NullPointer);

    // free functions accept null
    unsafe {
        gp_params_free(ptr::null_mut());
        gp_scenario_free(ptr::null_mut());
        gp_policy_free(ptr::null_mut());
    }
}

#[test]
fn glide_round_trip() {
    let p = params();
    let s = scenario(30.0);
    let n = unsafe { gp_scenario_periods(s) };
    assert_eq!(n, 30);

    let constant = vec![0.6; n];
    let (mut mean, mut std) = (0.0, 0.0);
    let st = unsafe { gp_wealth_moments(p, s, constant.as_ptr(), n, &mut mean, &mut std) };
    assert_eq!(st, GpStatus::Ok);
    assert!(mean > 300_000.0 && std > 0.0);

    let mut glide = vec![0.0; n];
    let st = unsafe { gp_optimize_glide(p, s, mean, glide.as_mut_ptr(), n) };
    assert_eq!(st, GpStatus::Ok, "{}", last_error());
    let (mut m2, mut s2) = (0.0, 0.0);
    unsafe { gp_wealth_moments(p, s, glide.as_ptr(), n, &mut m2, &mut s2) };
    assert!((m2 - mean).abs() / mean < 1e-5);
    assert!(s2 <= std * (1.0 + 1e-9));

    let st = unsafe { gp_optimize_glide(p, s, mean, glide.as_mut_ptr(), n - 1) };
    assert_eq!(st, GpStatus::InvalidArgument);

    let th = [500_000.0, 650_000.0];
    let mut probs = [0.0; 2];
    let mut stats = GpStats::default();
    let st = unsafe {
        gp_simulate_glide(p, s, glide.as_ptr(), n, 20_000, 3, th.as_ptr(), 2, probs.as_mut_ptr(), &mut stats)
    };
    assert_eq!(st, GpStatus::Ok);
    assert_eq!(stats.n_paths, 20_000);
    assert!((stats.mean - mean).abs() < 4.0 * stats.standard_error);
    assert!(probs[0] <= probs[1] && probs[1] < 1.0);

    unsafe {
        gp_scenario_free(s);
        gp_params_free(p);
    }
}

#[test]
fn policy_solve_lookup_save_load() {
    let p = params();
    let s = scenario(5.0);
    let mut pol = ptr::null_mut();
    assert_eq!(unsafe { gp_solve_policy(p, s, 80_000.0, &mut pol) }, GpStatus::Ok, "{}", last_error());

    let (mut w, mut v, mut f) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(gp_policy_target(pol, &mut w), GpStatus::Ok);
        assert_eq!(gp_policy_initial_value(pol, &mut v), GpStatus::Ok);
        assert_eq!(gp_policy_lookup(pol, 0.0, 0, &mut f), GpStatus::Ok);
    }
    assert_eq!(w, 80_000.0);
    assert!(v > 0.0);
    assert!((0.0..=1.0).contains(&f));
    // far above target everything is in bonds
    unsafe { gp_policy_lookup(pol, 1e6, 4, &mut f) };
    assert_eq!(f, 0.0);
    assert_eq!(unsafe { gp_policy_lookup(pol, 1.0, 5, &mut f) }, GpStatus::InvalidArgument);

    let dir = std::env::temp_dir().join(format!("gp_ffi_{}", std::process::id()));
    let path = CString::new(dir.join("policy.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gp_policy_save(pol, path.as_ptr()) }, GpStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { gp_policy_load(path.as_ptr(), &mut loaded) }, GpStatus::Ok);
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        gp_policy_lookup(pol, 37_000.0, 2, &mut a);
        gp_policy_lookup(loaded, 37_000.0, 2, &mut b);
    }
    assert_eq!(a, b);

    let mut stats = GpStats::default();
    let st = unsafe { gp_simulate_policy(p, s, loaded, 5_000, 1, ptr::null(), 0, ptr::null_mut(), &mut stats) };
    assert_eq!(st, GpStatus::Ok);
    assert!(stats.mean > 0.0 && stats.mean < 80_000.0 * 1.5);

    unsafe {
        gp_policy_free(pol);
        gp_policy_free(loaded);
        gp_scenario_free(s);
        gp_params_free(p);
    }
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/glidepath.h");
    for sym in [
        "gp_last_error_message",
        "gp_params_from_json",
        "gp_params_load",
        "gp_params_free",
        "gp_scenario_new",
        "gp_scenario_from_json",
        "gp_scenario_periods",
        "gp_scenario_free",
        "gp_wealth_moments",
        "gp_optimize_glide",
        "gp_solve_policy",
        "gp_calibrate_target",
        "gp_policy_lookup",
        "gp_policy_target",
        "gp_policy_initial_value",
        "gp_policy_save",
        "gp_policy_load",
        "gp_policy_free",
        "gp_simulate_glide",
        "gp_simulate_policy",
        "typedef struct GpPolicy GpPolicy",
        "GP_STATUS_OK = 0",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}
