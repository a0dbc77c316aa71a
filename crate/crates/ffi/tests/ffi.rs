use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use coopsense::direct::direct_threshold;
use coopsense::fusion::condition_i_bounds;
use coopsense::indirect::lr_dishonest;
use coopsense::ScenarioParams;
use coopsense_ffi::*;

fn params(cp: f64) -> CssParams {
    CssParams {
        n_total: 6,
        n_attackers: 2,
        p_idle: 0.6,
        p_false_alarm: 0.08,
        p_missed_detection: 0.08,
        collision_penalty: cp,
        direct_punishment: 0.0,
        discount: 0.9,
        total_rate: 1.0,
    }
}

fn scenario(cp: f64) -> *mut CssScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { css_scenario_new(&params(cp), &mut s) }, CssStatus::Ok);
    s
}

#[test]
fn results_match_library() {
    let s = scenario(1e4);
    let p = ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1e4);
    unsafe {
        let (mut lo, mut hi, mut region) = (0.0, 0.0, CssRegion::Below);
        assert_eq!(css_condition_i_bounds(s, &mut lo, &mut hi, &mut region), CssStatus::Ok);
        let b = condition_i_bounds(&p);
        assert_eq!((lo, hi, region), (b.lower_bound, b.upper_bound, CssRegion::Inside));

        let (mut th, mut oracle) = (0.0, 0.0);
        assert_eq!(css_direct_threshold(s, 2, &mut th), CssStatus::Ok);
        assert_eq!(css_direct_threshold_oracle(s, 2, &mut oracle), CssStatus::Ok);
        assert_eq!(th, direct_threshold(2, &p).unwrap().value);
        assert!((th - oracle).abs() <= 1e-9 * th);

        let (mut h, mut d, mut z) = (0.0, 0.0, 0);
        assert_eq!(css_long_term_rewards(s, &mut h, &mut d, &mut z), CssStatus::Ok);
        let lr = lr_dishonest(&p);
        assert_eq!((h, d), (lr.lr_honest, lr.lr_dishonest));
        assert_eq!(z, lr.z_star.unwrap() as i32);

        let (mut b, mut t, mut r) = (0, 0, 0.0);
        assert_eq!(css_best_response(s, 0, 0, false, &mut b, &mut t, &mut r), CssStatus::Ok);
        assert_eq!((b, t), (1, 1));
        assert_eq!(css_best_response(s, 5, 0, false, &mut b, &mut t, &mut r), CssStatus::OutOfRange);
        css_scenario_free(s);
    }
}

#[test]
fn delta_threshold_statuses() {
    let at = scenario(1e4);
    let nt = scenario(1e5);
    let mut d = 0.0;
    unsafe {
        assert_eq!(css_delta_threshold(at, &mut d), CssStatus::RequiresNonAggressive);
        assert_eq!(css_delta_threshold(nt, &mut d), CssStatus::Ok);
        assert!(d > 0.0 && d <= 1.0);
        assert_eq!(css_delta_threshold(nt, ptr::null_mut()), CssStatus::NullPointer);
        assert_eq!(css_delta_threshold(ptr::null(), &mut d), CssStatus::NullPointer);
        css_scenario_free(at);
        css_scenario_free(nt);
        css_scenario_free(ptr::null_mut());
    }
}

#[test]
fn simulate_json_round_trip() {
    let config = CString::new(
        r#"{"schema_version": 1, "scenario": {"n_total": 5, "n_attackers": 2, "p_idle": 0.6,
        "p_false_alarm": 0.2, "p_missed_detection": 0.2, "collision_penalty": 300},
        "command": {"name": "simulate", "mode": "direct", "horizon": 100, "replications": 4, "seed": 9}}"#,
    )
    .unwrap();
    let mut outs = Vec::new();
    for workers in [1, 4] {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { css_simulate_json(config.as_ptr(), workers, &mut out) }, CssStatus::Ok);
        outs.push(unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned());
        unsafe { css_string_free(out) };
    }
    assert_eq!(outs[0], outs[1]);
    let v: serde_json::Value = serde_json::from_str(&outs[0]).unwrap();
    assert_eq!(v["mode"], "direct");
    assert_eq!(v["base_seed"], 9);

    let bad = CString::new("{").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { css_simulate_json(bad.as_ptr(), 1, &mut out) }, CssStatus::InvalidConfig);
    assert!(out.is_null());
    let msg = unsafe { CStr::from_ptr(css_last_error()) }.to_str().unwrap();
    assert!(msg.contains("config"));
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(css_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("coopsense.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "css_scenario_new",
        "css_scenario_free",
        "css_posterior",
        "css_condition_i_bounds",
        "css_direct_threshold",
        "css_direct_threshold_oracle",
        "css_long_term_rewards",
        "css_delta_threshold",
        "css_best_response",
        "css_simulate_json",
        "css_string_free",
        "css_last_error",
        "css_version",
        "typedef struct CssScenario CssScenario;",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

/// Compile and run a C program against the header and the static library
/// when a C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    // target/<profile>/deps/<test> -> target/<profile>
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libcoopsense_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("c").join("smoke.c");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let fields: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .map(|x| x.parse().unwrap())
        .collect();
    let p = ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1e4);
    assert_eq!(fields[0], condition_i_bounds(&p).lower_bound);
    assert_eq!(fields[2], direct_threshold(2, &p).unwrap().value);
}
