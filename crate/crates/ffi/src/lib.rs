//! C ABI over the glidepath library.
//!
//! Objects cross the boundary as opaque handles created by `gp_*_new`,
//! `gp_*_from_json` or `gp_*_load` and released by the matching `gp_*_free`.
//! Every fallible call returns a [`GpStatus`]; on failure the message is
//! available from [`gp_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use glidepath::adaptive::{calibrate_target, solve_policy, GridConfig, McConfig, PolicyGrid};
use glidepath::glide::{optimize_glide, wealth_moments, PeriodMoments};
use glidepath::jump_model::KouParams;
use glidepath::simulation::run_monte_carlo;
use glidepath::strategy::{Scenario, Strategy};
use glidepath::error::{ModelError, SimulationError, SolverError, StrategyError};
use glidepath::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    ParseError = 4,
    ComputationFailed = 5,
    Panic = 6,
}

/// Jump-diffusion market parameters.
pub struct GpParams(KouParams);

/// Accumulation scenario.
pub struct GpScenario(Scenario);

/// Solved adaptive policy.
pub struct GpPolicy(Arc<PolicyGrid>);

/// Terminal-wealth summary of a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GpStats {
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
    pub n_paths: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(GpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => GpStatus::IoError,
            Error::Json { .. } | Error::Data(_) => GpStatus::ParseError,
            Error::Config(_)
            | Error::Model(ModelError::ParameterOutOfDomain(_))
            | Error::Strategy(StrategyError::InvalidScenario(_) | StrategyError::InvalidStrategy(_))
            | Error::Solver(SolverError::UnknownTime(_) | SolverError::InvalidGrid(_)) => {
                GpStatus::InvalidArgument
            }
            _ => GpStatus::ComputationFailed,
        };
        Failure(status, e.to_string())
    }
}

macro_rules! impl_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::from(Error::from(e))
            }
        }
    )*};
}

impl_failure!(ModelError, StrategyError, SolverError, SimulationError);

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            GpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside glidepath");
            GpStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(GpStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GpStatus::InvalidArgument, "string is not UTF-8".into()))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

fn parse_json<T: for<'de> serde::Deserialize<'de>>(text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(GpStatus::ParseError, e.to_string()))
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse parameters from a JSON object with keys
/// `mu, sigma, lambda, p_up, eta1, eta2, r, dt_months`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_params_from_json(json: *const c_char, out: *mut *mut GpParams) -> GpStatus {
    guard(|| {
        let p: KouParams = parse_json(c_str(json)?)?;
        p.validate()?;
        write_out(out, Box::into_raw(Box::new(GpParams(p))))
    })
}

/// Read a parameter file written by `glidepath fit`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_params_load(path: *const c_char, out: *mut *mut GpParams) -> GpStatus {
    guard(|| {
        let p: KouParams = glidepath::report::read_json(Path::new(c_str(path)?))?;
        p.validate()?;
        write_out(out, Box::into_raw(Box::new(GpParams(p))))
    })
}

/// # Safety
/// `params` must come from a `gp_params_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn gp_params_free(params: *mut GpParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Scenario with the default schedule: `W0` at date 0, `c` at every later
/// rebalance date, annual rebalancing.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_scenario_new(
    horizon_years: f64,
    initial_wealth: f64,
    contribution: f64,
    out: *mut *mut GpScenario,
) -> GpStatus {
    guard(|| {
        let s = Scenario {
            horizon_years,
            initial_wealth,
            contribution,
            rebalance_interval: 1.0,
            contribution_times: None,
        };
        s.validate()?;
        write_out(out, Box::into_raw(Box::new(GpScenario(s))))
    })
}

/// Parse a scenario `{"T": .., "W0": .., "c": ..}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_scenario_from_json(json: *const c_char, out: *mut *mut GpScenario) -> GpStatus {
    guard(|| {
        let s: Scenario = parse_json(c_str(json)?)?;
        s.validate()?;
        write_out(out, Box::into_raw(Box::new(GpScenario(s))))
    })
}

/// Number of rebalance dates, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gp_scenario_periods(scenario: *const GpScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.n_periods())
}

/// # Safety
/// `scenario` must come from a `gp_scenario_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn gp_scenario_free(scenario: *mut GpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Mean and standard deviation of terminal wealth for a glide path of
/// `len` fractions.
///
/// # Safety
/// Handles must be live; `glide` must hold `len` values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gp_wealth_moments(
    params: *const GpParams,
    scenario: *const GpScenario,
    glide: *const f64,
    len: usize,
    mean_out: *mut f64,
    std_out: *mut f64,
) -> GpStatus {
    guard(|| {
        let p = &deref(params)?.0;
        let s = &deref(scenario)?.0;
        let pm = PeriodMoments::from_params(p, s.dt())?;
        let m = wealth_moments(slice(glide, len)?, s, &pm)?;
        write_out(mean_out, m.mean)?;
        write_out(std_out, m.std())
    })
}

/// Minimum-variance glide path with mean `target_mean`, written to
/// `glide_out` (`len` must equal the number of rebalance dates).
///
/// # Safety
/// Handles must be live; `glide_out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gp_optimize_glide(
    params: *const GpParams,
    scenario: *const GpScenario,
    target_mean: f64,
    glide_out: *mut f64,
    len: usize,
) -> GpStatus {
    guard(|| {
        let p = &deref(params)?.0;
        let s = &deref(scenario)?.0;
        if len != s.n_periods() {
            return Err(Failure(
                GpStatus::InvalidArgument,
                format!("output length {len} != {} rebalance dates", s.n_periods()),
            ));
        }
        if glide_out.is_null() {
            return Err(null());
        }
        let pm = PeriodMoments::from_params(p, s.dt())?;
        let sol = optimize_glide(s, &pm, target_mean)?;
        std::slice::from_raw_parts_mut(glide_out, len).copy_from_slice(&sol.glide);
        Ok(())
    })
}

/// Solve the adaptive policy for a fixed target `w_star` on the default grid.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_solve_policy(
    params: *const GpParams,
    scenario: *const GpScenario,
    w_star: f64,
    out: *mut *mut GpPolicy,
) -> GpStatus {
    guard(|| {
        let grid = solve_policy(&deref(params)?.0, &deref(scenario)?.0, w_star, &GridConfig::default())?;
        write_out(out, Box::into_raw(Box::new(GpPolicy(Arc::new(grid)))))
    })
}

/// Calibrate `W*` so that the adaptive mean terminal wealth equals `goal_mean`.
///
/// # Safety
/// Handles must be live; `w_star_out` and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_calibrate_target(
    params: *const GpParams,
    scenario: *const GpScenario,
    goal_mean: f64,
    n_paths: usize,
    seed: u64,
    w_star_out: *mut f64,
    out: *mut *mut GpPolicy,
) -> GpStatus {
    guard(|| {
        let mc = McConfig { n_paths, seed };
        let cal = calibrate_target(
            &deref(params)?.0,
            &deref(scenario)?.0,
            goal_mean,
            &GridConfig::default(),
            &mc,
        )?;
        write_out(w_star_out, cal.w_star)?;
        write_out(out, Box::into_raw(Box::new(GpPolicy(Arc::new(cal.grid)))))
    })
}

/// Equity fraction at rebalance date `t` for wealth held before that
/// date's contribution.
///
/// # Safety
/// `policy` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_lookup(policy: *const GpPolicy, wealth: f64, t: usize, out: *mut f64) -> GpStatus {
    guard(|| {
        let p = deref(policy)?.0.lookup(wealth, t)?;
        write_out(out, p)
    })
}

/// Target `W*` of a policy.
///
/// # Safety
/// `policy` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_target(policy: *const GpPolicy, out: *mut f64) -> GpStatus {
    guard(|| write_out(out, deref(policy)?.0.w_star))
}

/// Optimal expected squared shortfall from the initial wealth.
///
/// # Safety
/// `policy` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_initial_value(policy: *const GpPolicy, out: *mut f64) -> GpStatus {
    guard(|| write_out(out, deref(policy)?.0.initial_value()))
}

/// # Safety
/// `policy` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_save(policy: *const GpPolicy, path: *const c_char) -> GpStatus {
    guard(|| Ok(deref(policy)?.0.save(Path::new(c_str(path)?))?))
}

/// Read a policy file written by `gp_policy_save` or `glidepath solve`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_load(path: *const c_char, out: *mut *mut GpPolicy) -> GpStatus {
    guard(|| {
        let grid = PolicyGrid::load(Path::new(c_str(path)?))?;
        write_out(out, Box::into_raw(Box::new(GpPolicy(Arc::new(grid)))))
    })
}

/// # Safety
/// `policy` must come from a `gp_policy_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn gp_policy_free(policy: *mut GpPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

unsafe fn simulate(
    strategy: Strategy,
    params: *const GpParams,
    scenario: *const GpScenario,
    n_paths: usize,
    seed: u64,
    thresholds: *const f64,
    n_thresholds: usize,
    probs_out: *mut f64,
    stats_out: *mut GpStats,
) -> Result<(), Failure> {
    let p = &deref(params)?.0;
    let s = &deref(scenario)?.0;
    let th = slice(thresholds, n_thresholds)?;
    if n_thresholds > 0 && probs_out.is_null() {
        return Err(null());
    }
    let st = run_monte_carlo(&strategy, s, p, n_paths, seed)?.stats(th)?;
    // report probabilities in the caller's threshold order
    for (k, t) in th.iter().enumerate() {
        probs_out.add(k).write(st.shortfall(*t).unwrap_or(f64::NAN));
    }
    write_out(
        stats_out,
        GpStats {
            mean: st.mean,
            std: st.std,
            standard_error: st.mc_standard_error_mean,
            n_paths: st.n_paths,
        },
    )
}

/// Monte Carlo of a glide path (`len` fractions). `probs_out` receives
/// `P[W_T < thresholds[k]]`.
///
/// # Safety
/// Handles must be live; arrays must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gp_simulate_glide(
    params: *const GpParams,
    scenario: *const GpScenario,
    glide: *const f64,
    len: usize,
    n_paths: usize,
    seed: u64,
    thresholds: *const f64,
    n_thresholds: usize,
    probs_out: *mut f64,
    stats_out: *mut GpStats,
) -> GpStatus {
    guard(|| {
        let g = slice(glide, len)?.to_vec();
        simulate(
            Strategy::Glide(g),
            params,
            scenario,
            n_paths,
            seed,
            thresholds,
            n_thresholds,
            probs_out,
            stats_out,
        )
    })
}

/// Monte Carlo of an adaptive policy.
///
/// # Safety
/// Handles must be live; arrays must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gp_simulate_policy(
    params: *const GpParams,
    scenario: *const GpScenario,
    policy: *const GpPolicy,
    n_paths: usize,
    seed: u64,
    thresholds: *const f64,
    n_thresholds: usize,
    probs_out: *mut f64,
    stats_out: *mut GpStats,
) -> GpStatus {
    guard(|| {
        let grid = deref(policy)?.0.clone();
        simulate(
            Strategy::Adaptive(grid),
            params,
            scenario,
            n_paths,
            seed,
            thresholds,
            n_thresholds,
            probs_out,
            stats_out,
        )
    })
}
