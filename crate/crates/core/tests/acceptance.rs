//! Acceptance suite: every primary criterion at full size.
//!
//! Run with `cargo test -p coopsense --test acceptance -- --nocapture` to see
//! one line per criterion.

use coopsense::verify::{run_check, CheckResult, VerifyOptions};

fn run(id: u8) -> CheckResult {
    let r = run_check(id, &VerifyOptions::default()).expect("valid options");
    println!("{}", r.summary_line());
    for d in &r.details {
        println!("       {d}");
    }
    r
}

fn assert_passed(id: u8) {
    let r = run(id);
    assert!(r.passed, "criterion {id} failed: {:?}", r.details);
}

#[test]
fn criterion_01_posterior_monotonicity() {
    assert_passed(1);
}

#[test]
fn criterion_02_condition_i_equivalence() {
    assert_passed(2);
}

#[test]
fn criterion_03_single_slot_best_response() {
    assert_passed(3);
}

#[test]
fn criterion_04_direct_threshold_oracle() {
    assert_passed(4);
}

#[test]
fn criterion_05_direct_threshold_monotonicity() {
    assert_passed(5);
}

#[test]
fn criterion_06_long_term_rewards_vs_mdp() {
    assert_passed(6);
}

#[test]
fn criterion_07_discount_threshold() {
    assert_passed(7);
}

#[test]
fn criterion_08_heterogeneous_direct_threshold() {
    assert_passed(8);
}

#[test]
fn criterion_09_simulation_agreement() {
    assert_passed(9);
}

#[test]
fn criterion_10_simulation_determinism() {
    assert_passed(10);
}
