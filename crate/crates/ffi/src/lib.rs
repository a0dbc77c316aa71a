//! C ABI over the coopsense analysis toolkit.
//!
//! Every function returns a [`CssStatus`]; results are written through out
//! pointers. On failure `css_last_error()` describes the error for the
//! calling thread. Scenarios are opaque handles created by
//! `css_scenario_new` and released with `css_scenario_free`. Strings
//! returned by the library are released with `css_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use coopsense::config::{Command, RunConfig};
use coopsense::direct::{direct_threshold, direct_threshold_oracle};
use coopsense::fusion::{condition_i_bounds, Region};
use coopsense::indirect::{delta_threshold, lr_dishonest};
use coopsense::oneshot::{best_response, SensingState};
use coopsense::posterior::posterior_idle;
use coopsense::sim::{run_experiment, stats_json};
use coopsense::{Error, ScenarioParams};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    OutOfRange = 3,
    /// The call needs a scenario where attackers do not transmit after punishment.
    RequiresNonAggressive = 4,
    NoCrossing = 5,
    NoFiniteThreshold = 6,
    InvalidConfig = 7,
    Panic = 8,
}

/// Scenario parameters passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CssParams {
    pub n_total: u32,
    pub n_attackers: u32,
    pub p_idle: f64,
    pub p_false_alarm: f64,
    pub p_missed_detection: f64,
    pub collision_penalty: f64,
    pub direct_punishment: f64,
    pub discount: f64,
    pub total_rate: f64,
}

/// Validated scenario.
pub struct CssScenario {
    params: ScenarioParams,
}

/// C_p regions relative to the OR-rule optimality interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssRegion {
    Below = 1,
    Inside = 2,
    Above = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CssStatus {
    match e {
        Error::InvalidParams(_) => CssStatus::InvalidParams,
        Error::CountOutOfRange { .. }
        | Error::ThresholdOutOfRange { .. }
        | Error::AttackersOutOfRange { .. }
        | Error::Inconsistent(_) => CssStatus::OutOfRange,
        Error::RequiresNonAggressive(_) => CssStatus::RequiresNonAggressive,
        Error::NoCrossing => CssStatus::NoCrossing,
        Error::NoFiniteThreshold => CssStatus::NoFiniteThreshold,
        Error::Unsupported(_) => CssStatus::InvalidConfig,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CssStatus, String)>) -> CssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CssStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CssStatus::Panic
        }
    }
}

fn lift(e: Error) -> (CssStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CssStatus, String) {
    (CssStatus::NullPointer, format!("{what} is null"))
}

unsafe fn scenario<'a>(s: *const CssScenario) -> Result<&'a ScenarioParams, (CssStatus, String)> {
    s.as_ref().map(|s| &s.params).ok_or_else(|| null("scenario"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), (CssStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn css_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn css_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Validate `params` and create a scenario handle.
///
/// # Safety
/// `params` must point to a `CssParams` and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn css_scenario_new(params: *const CssParams, out: *mut *mut CssScenario) -> CssStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let params = ScenarioParams {
            n_total: p.n_total as usize,
            n_attackers: p.n_attackers as usize,
            p_idle: p.p_idle,
            p_false_alarm: p.p_false_alarm,
            p_missed_detection: p.p_missed_detection,
            collision_penalty: p.collision_penalty,
            direct_punishment: p.direct_punishment,
            discount: p.discount,
            total_rate: p.total_rate,
        };
        params.validate().map_err(lift)?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(Box::into_raw(Box::new(CssScenario { params })));
        Ok(())
    })
}

/// Release a handle from `css_scenario_new`. Null is ignored.
///
/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn css_scenario_free(s: *mut CssScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Posterior of an idle and a busy channel given `busy_count` of `group_size`
/// busy decisions.
///
/// # Safety
/// `s` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_posterior(
    s: *const CssScenario,
    group_size: u32,
    busy_count: u32,
    p_idle: *mut f64,
    p_busy: *mut f64,
) -> CssStatus {
    guard(|| {
        let p = scenario(s)?;
        let post = posterior_idle(group_size as usize, busy_count as usize, p).map_err(lift)?;
        write(p_idle, post.p_idle_given_reports, "p_idle")?;
        write(p_busy, post.p_busy_given_reports, "p_busy")
    })
}

/// Bounds of the C_p interval where the OR rule is optimal, and where the
/// scenario's C_p falls.
///
/// # Safety
/// `s` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_condition_i_bounds(
    s: *const CssScenario,
    lower: *mut f64,
    upper: *mut f64,
    region: *mut CssRegion,
) -> CssStatus {
    guard(|| {
        let b = condition_i_bounds(scenario(s)?);
        write(lower, b.lower_bound, "lower")?;
        write(upper, b.upper_bound, "upper")?;
        let r = match b.region {
            Region::I => CssRegion::Below,
            Region::II => CssRegion::Inside,
            Region::III => CssRegion::Above,
        };
        write(region, r, "region")
    })
}

/// Closed-form direct-punishment threshold for `m` attackers.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_direct_threshold(s: *const CssScenario, m: u32, out: *mut f64) -> CssStatus {
    guard(|| {
        let t = direct_threshold(m as usize, scenario(s)?).map_err(lift)?;
        write(out, t.value, "out")
    })
}

/// Direct-punishment threshold by bisection over the best-response table.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_direct_threshold_oracle(s: *const CssScenario, m: u32, out: *mut f64) -> CssStatus {
    guard(|| {
        let t = direct_threshold_oracle(m as usize, scenario(s)?).map_err(lift)?;
        write(out, t, "out")
    })
}

/// Long-term rewards of the attackers when honest and under their best
/// attack policy; `z_star` is -1 when attacking does not pay.
///
/// # Safety
/// `s` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_long_term_rewards(
    s: *const CssScenario,
    honest: *mut f64,
    dishonest: *mut f64,
    z_star: *mut i32,
) -> CssStatus {
    guard(|| {
        let lr = lr_dishonest(scenario(s)?);
        write(honest, lr.lr_honest, "honest")?;
        write(dishonest, lr.lr_dishonest, "dishonest")?;
        let z = if lr.attack_prevented {
            -1
        } else {
            lr.z_star.map_or(-1, |z| z as i32)
        };
        write(z_star, z, "z_star")
    })
}

/// Smallest discount factor that removes the attack incentive under indirect
/// punishment. 1 means no discount factor below 1 does.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_delta_threshold(s: *const CssScenario, out: *mut f64) -> CssStatus {
    guard(|| {
        let d = delta_threshold(scenario(s)?).map_err(lift)?;
        write(out, d.value, "out")
    })
}

/// Single-slot best response of the attackers in a sensing state.
///
/// # Safety
/// `s` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_best_response(
    s: *const CssScenario,
    honest_busy: u32,
    attacker_busy: u32,
    include_direct_punishment: bool,
    busy_reports: *mut u32,
    transmitters: *mut u32,
    attacker_reward: *mut f64,
) -> CssStatus {
    guard(|| {
        let state = SensingState::new(honest_busy as usize, attacker_busy as usize);
        let (profile, r) = best_response(state, scenario(s)?, include_direct_punishment).map_err(lift)?;
        write(busy_reports, profile.busy_reports as u32, "busy_reports")?;
        write(transmitters, profile.transmitters as u32, "transmitters")?;
        write(attacker_reward, r.attacker_aggregate, "attacker_reward")
    })
}

/// Run the simulation described by a JSON run configuration (the format the
/// command-line tool reads; its command block must be `simulate` or absent)
/// and return the statistics as JSON. Free the result with `css_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn css_simulate_json(config_json: *const c_char, workers: u32, out: *mut *mut c_char) -> CssStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| (CssStatus::InvalidConfig, e.to_string()))?;
        let config = RunConfig::from_json(text).map_err(lift)?;
        config.validate().map_err(lift)?;
        let Command::Simulate(opts) = config.command_for("simulate").map_err(lift)? else {
            unreachable!("command_for returns the requested command")
        };
        let stats = run_experiment(&opts.sim_config(&config.scenario, None), workers as usize).map_err(lift)?;
        let json = CString::new(stats_json(&stats)).map_err(|e| (CssStatus::Panic, e.to_string()))?;
        out.write(json.into_raw());
        Ok(())
    })
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn css_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use std::ptr;

    use super::*;

    fn params() -> CssParams {
        CssParams {
            n_total: 6,
            n_attackers: 2,
            p_idle: 0.6,
            p_false_alarm: 0.08,
            p_missed_detection: 0.08,
            collision_penalty: 1e4,
            direct_punishment: 0.0,
            discount: 0.9,
            total_rate: 1.0,
        }
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(css_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn handle_lifecycle() {
        let mut s = ptr::null_mut();
        unsafe {
            assert_eq!(css_scenario_new(&params(), &mut s), CssStatus::Ok);
            assert!(!s.is_null());
            let (mut pi, mut pb) = (0.0, 0.0);
            assert_eq!(css_posterior(s, 6, 0, &mut pi, &mut pb), CssStatus::Ok);
            assert!((pb - 2.8821831420455035e-7).abs() < 1e-18);
            assert_eq!(css_posterior(s, 6, 7, &mut pi, &mut pb), CssStatus::OutOfRange);
            assert!(last_error().contains("exceeds"));
            css_scenario_free(s);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params();
        p.p_idle = 1.5;
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { css_scenario_new(&p, &mut s) }, CssStatus::InvalidParams);
        assert!(s.is_null());
        assert!(last_error().contains("p_idle"));
        assert_eq!(unsafe { css_scenario_new(ptr::null(), &mut s) }, CssStatus::NullPointer);
    }
}
